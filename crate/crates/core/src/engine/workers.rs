use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// A processing job waiting for or holding a worker.
#[derive(Debug, Clone, PartialEq)]
pub struct Job<T> {
    pub tag: T,
    /// Absolute deadline; the dispatch key.
    pub deadline: f64,
    /// Expected service time, used only for backlog estimates.
    pub expected_service: f64,
}

#[derive(Debug)]
struct Queued<T> {
    job: Job<T>,
    seq: u64,
}

impl<T> PartialEq for Queued<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Queued<T> {}

impl<T> PartialOrd for Queued<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Queued<T> {
    // Max-heap: the earliest deadline (then the earliest submission) is
    // the greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .job
            .deadline
            .total_cmp(&self.job.deadline)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Non-preemptive earliest-deadline-first pool of identical workers.
#[derive(Debug)]
pub struct WorkerPool<T> {
    workers: u32,
    queue: BinaryHeap<Queued<T>>,
    /// `(expected finish)` of each job in service.
    in_service: Vec<f64>,
    queued_work: f64,
    seq: u64,
}

impl<T> WorkerPool<T> {
    pub fn new(workers: u32) -> Self {
        WorkerPool {
            workers,
            queue: BinaryHeap::new(),
            in_service: Vec::with_capacity(workers as usize),
            queued_work: 0.0,
            seq: 0,
        }
    }

    pub fn workers(&self) -> u32 {
        self.workers
    }

    pub fn busy(&self) -> u32 {
        self.in_service.len() as u32
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Queues a job. Service begins on the next [`WorkerPool::start_ready`].
    pub fn enqueue(&mut self, job: Job<T>) {
        self.queued_work += job.expected_service;
        self.seq += 1;
        self.queue.push(Queued { job, seq: self.seq });
    }

    /// Moves earliest-deadline jobs onto free workers and returns them in
    /// dispatch order.
    pub fn start_ready(&mut self, now: f64) -> Vec<Job<T>> {
        let mut started = Vec::new();
        while self.busy() < self.workers {
            let Some(q) = self.queue.pop() else { break };
            self.queued_work = if self.queue.is_empty() {
                0.0
            } else {
                (self.queued_work - q.job.expected_service).max(0.0)
            };
            self.in_service.push(now + q.job.expected_service);
            started.push(q.job);
        }
        started
    }

    /// Frees the worker whose job was expected to finish at
    /// `expected_finish` (as recorded by `start_ready`).
    pub fn finish(&mut self, expected_finish: f64) {
        let pos = self
            .in_service
            .iter()
            .position(|&f| f == expected_finish)
            .expect("finish without a matching job in service");
        self.in_service.swap_remove(pos);
    }

    /// Expected wait before a newly submitted job would start.
    pub fn backlog(&self, now: f64) -> f64 {
        if self.workers == 0 {
            return f64::INFINITY;
        }
        if self.busy() < self.workers {
            return 0.0;
        }
        let remaining: f64 = self.in_service.iter().map(|&f| (f - now).max(0.0)).sum();
        (remaining + self.queued_work) / self.workers as f64
    }
}
