use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// Behavior-policy log-density; on-policy only.
    pub log_prob: f64,
    /// Value estimate of `obs`; on-policy only.
    pub value: f64,
}

/// On-policy trajectory storage, emptied after every update.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    transitions: Vec<Transition>,
    horizon: usize,
}

impl RolloutBuffer {
    pub fn new(horizon: usize) -> Self {
        assert!(horizon > 0);
        Self { transitions: Vec::with_capacity(horizon), horizon }
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(self.transitions.len() < self.horizon);
        self.transitions.push(t);
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.horizon
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    slots: Vec<Transition>,
    capacity: usize,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { slots: Vec::with_capacity(capacity.min(1 << 16)), capacity, next: 0, inserted: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Draws `n` transitions uniformly with replacement from the filled slots.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        assert!(!self.slots.is_empty(), "sampling an empty replay buffer");
        (0..n).map(|_| &self.slots[rng.random_range(0..self.slots.len())]).collect()
    }
}
