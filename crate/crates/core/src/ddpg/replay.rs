use rand::Rng;

use crate::mathcore::Array2;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

/// Minibatch in matrix form, one row per transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub s: Array2,
    pub a: Array2,
    pub r: Vec<f64>,
    pub s2: Array2,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Option<Self> {
        let first = items.first()?;
        let n = items.len();
        let (sd, ad) = (first.s.len(), first.a.len());
        let mut s = Vec::with_capacity(n * sd);
        let mut a = Vec::with_capacity(n * ad);
        let mut s2 = Vec::with_capacity(n * sd);
        for t in items {
            s.extend_from_slice(&t.s);
            a.extend_from_slice(&t.a);
            s2.extend_from_slice(&t.s2);
        }
        Some(Self {
            s: Array2::new(n, sd, s).ok()?,
            a: Array2::new(n, ad, a).ok()?,
            r: items.iter().map(|t| t.r).collect(),
            s2: Array2::new(n, sd, s2).ok()?,
            done: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement; `None` when empty.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Option<Batch> {
        if self.items.is_empty() || batch == 0 {
            return None;
        }
        let picked: Vec<&Transition> = (0..batch)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect();
        Batch::from_transitions(&picked)
    }
}
