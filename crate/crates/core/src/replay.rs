//! Bounded FIFO transition store.
//!
//! The buffer's empirical state-action distribution is the data distribution
//! ρ under which F and B are trained and under which `z_R` is estimated.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, State};
use crate::error::{FbError, Result};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

const MAGIC: &[u8; 4] = b"FBRB";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub next: State,
}

impl Transition {
    pub fn new(state: State, action: Action, next: State) -> Self {
        Transition { state, action, next }
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    /// `b` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(FbError::EmptyReplay);
        }
        let n = self.entries.len();
        Ok((0..b).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample_transitions<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(b, rng)?
            .into_iter()
            .map(|i| self.entries[i])
            .collect())
    }

    /// Target state-action pairs, drawn independently of any transition batch.
    pub fn sample_targets<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<(State, Action)>> {
        Ok(self
            .sample_indices(b, rng)?
            .into_iter()
            .map(|i| {
                let t = &self.entries[i];
                (t.state, t.action)
            })
            .collect())
    }

    /// Binary dump: header, then per record the length-prefixed start state,
    /// the action index and the length-prefixed next state.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for t in &self.entries {
            write_state(&mut w, &t.state)?;
            w.write_all(&(t.action.0 as u32).to_le_bytes())?;
            write_state(&mut w, &t.next)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(FbError::Format("not a replay dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(FbError::Format(format!("unsupported replay version {version}")));
        }
        let capacity = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        if capacity == 0 || count > capacity {
            return Err(FbError::Format("inconsistent replay header".into()));
        }
        let mut buffer = ReplayBuffer::new(capacity);
        for _ in 0..count {
            let state = read_state(&mut r)?;
            let action = Action(read_u32(&mut r)? as usize);
            let next = read_state(&mut r)?;
            buffer.push(Transition { state, action, next });
        }
        Ok(buffer)
    }
}

fn write_state<W: Write>(w: &mut W, s: &State) -> Result<()> {
    let values: Vec<f64> = match *s {
        State::Cell(c) => vec![c as f64],
        State::Point { x, y } => vec![x, y],
    };
    w.write_all(&(values.len() as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_state<R: Read>(r: &mut R) -> Result<State> {
    let len = read_u32(r)?;
    let mut vals = [0.0f64; 2];
    if !(1..=2).contains(&len) {
        return Err(FbError::Format(format!("bad state vector length {len}")));
    }
    for v in vals.iter_mut().take(len as usize) {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(if len == 1 {
        State::Cell(vals[0] as usize)
    } else {
        State::Point {
            x: vals[0],
            y: vals[1],
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
