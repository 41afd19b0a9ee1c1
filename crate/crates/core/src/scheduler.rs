//! Cycle model of the output permutation unit.
//!
//! The pool array produces one `N`-wide output vector per input cycle
//! (`A` bit-serial cycles) in pool-column order. Vectors are written into the
//! fill bank of a ping-pong buffer holding `N / (A·M)` vectors. Once the bank
//! is full the banks swap and `M` group selectors drain it: in drain cycle `j`
//! selector `g` reads filter `g·N/M + j` of every buffered vector from column
//! `col_of_filter[filter]`. A drain therefore lasts `N/M` cycles, exactly the
//! time needed to refill the other bank.
//!
//! Time is divided into windows of `N/M` cycles. Banks swap only at window
//! boundaries; a tile change with a partially filled bank idles to the next
//! boundary (a flush).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("invalid scheduler config: {0}")]
    Config(String),
    #[error("invalid permutation: {0}")]
    Permutation(String),
    #[error("vector has {found} values, unit is {expected} wide")]
    Width { expected: usize, found: usize },
    #[error("producer rate violation: vector {index} arrives at cycle {cycle}, earliest allowed is {earliest}")]
    Rate { index: usize, cycle: u64, earliest: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub pool_width: usize,
    pub act_bits: usize,
    pub groups: usize,
    pub out_bytes: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { pool_width: 128, act_bits: 8, groups: 4, out_bytes: 1 }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let SchedulerConfig { pool_width: n, act_bits: a, groups: m, out_bytes } = *self;
        if n == 0 || a == 0 || m == 0 || out_bytes == 0 {
            return Err(SchedulerError::Config("all sizes must be positive".into()));
        }
        if n % m != 0 {
            return Err(SchedulerError::Config(format!("pool width {n} is not divisible by {m} groups")));
        }
        if n % (a * m) != 0 {
            return Err(SchedulerError::Config(format!(
                "pool width {n} is not divisible by act_bits·groups = {}",
                a * m
            )));
        }
        Ok(())
    }

    /// Columns per group, which is also the drain time in cycles.
    pub fn group_width(&self) -> usize {
        self.pool_width / self.groups
    }

    /// Swap window length in bit-serial cycles.
    pub fn window_cycles(&self) -> u64 {
        self.group_width() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferGeometry {
    pub vectors_per_bank: usize,
    /// Both banks together.
    pub total_bytes: usize,
    pub fill_latency_input_cycles: usize,
}

pub fn buffer_geometry(config: &SchedulerConfig) -> Result<BufferGeometry, SchedulerError> {
    config.validate()?;
    let vpb = config.pool_width / (config.act_bits * config.groups);
    Ok(BufferGeometry {
        vectors_per_bank: vpb,
        total_bytes: 2 * vpb * config.pool_width * config.out_bytes,
        fill_latency_input_cycles: vpb,
    })
}

/// Output column feeding each filter slot; columns never leave their group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationMap {
    col_of_filter: Vec<usize>,
    filter_of_col: Vec<usize>,
}

impl PermutationMap {
    pub fn new(col_of_filter: Vec<usize>, groups: usize) -> Result<Self, SchedulerError> {
        let n = col_of_filter.len();
        if groups == 0 || !n.is_multiple_of(groups) {
            return Err(SchedulerError::Permutation(format!("width {n} does not split into {groups} groups")));
        }
        let gw = n / groups;
        let mut filter_of_col = vec![usize::MAX; n];
        for (f, &c) in col_of_filter.iter().enumerate() {
            if c >= n {
                return Err(SchedulerError::Permutation(format!("filter {f} maps to column {c} of {n}")));
            }
            if filter_of_col[c] != usize::MAX {
                return Err(SchedulerError::Permutation(format!("column {c} used twice")));
            }
            if f / gw != c / gw {
                return Err(SchedulerError::Permutation(format!("filter {f} maps to column {c} outside its group")));
            }
            filter_of_col[c] = f;
        }
        Ok(Self { col_of_filter, filter_of_col })
    }

    pub fn identity(n: usize) -> Self {
        Self { col_of_filter: (0..n).collect(), filter_of_col: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.col_of_filter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col_of_filter.is_empty()
    }

    pub fn col_of_filter(&self) -> &[usize] {
        &self.col_of_filter
    }

    pub fn filter_of_col(&self) -> &[usize] {
        &self.filter_of_col
    }

    pub fn is_identity(&self) -> bool {
        self.col_of_filter.iter().enumerate().all(|(f, &c)| f == c)
    }
}

/// `out[f] = y[col_of_filter[f]]`.
pub fn permute_vector<T: Copy>(y: &[T], map: &PermutationMap) -> Result<Vec<T>, SchedulerError> {
    if y.len() != map.len() {
        return Err(SchedulerError::Width { expected: map.len(), found: y.len() });
    }
    Ok(map.col_of_filter.iter().map(|&c| y[c]).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStats {
    /// Bit-serial cycles from the first push to the last drained value.
    pub cycles: u64,
    pub vectors_in: u64,
    pub vectors_out: u64,
    pub producer_stall_cycles: u64,
    /// Swaps postponed because the other bank was still draining.
    pub deferred_swaps: u64,
    pub bank_swaps: u64,
    pub fills: u64,
    pub flushes: u64,
    pub flush_idle_cycles: u64,
    pub index_reloads: u64,
    pub selector_reads: u64,
    pub pingpong_conflicts: u64,
    pub buffer_bytes: usize,
    pub act_bits: u64,
    pub vectors_per_bank: u64,
    pub first_swap_cycle: Option<u64>,
    pub first_emit_cycle: Option<u64>,
    pub last_emit_cycle: Option<u64>,
    pub first_batch: u64,
}

impl CycleStats {
    pub fn input_cycles(&self) -> f64 {
        self.cycles as f64 / self.act_bits.max(1) as f64
    }

    /// Input cycles until the first bank is handed to the selectors.
    pub fn fill_latency_input_cycles(&self) -> Option<f64> {
        self.first_swap_cycle.map(|c| c as f64 / self.act_bits as f64)
    }

    /// Vectors out per input cycle over the whole run, fill and drain included.
    pub fn average_throughput(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.vectors_out as f64 / self.input_cycles()
        }
    }

    /// Vectors out per input cycle after the first drained batch.
    pub fn steady_state_throughput(&self) -> Option<f64> {
        let (first, last) = (self.first_emit_cycle?, self.last_emit_cycle?);
        (last > first).then(|| (self.vectors_out - self.first_batch) as f64 * self.act_bits as f64 / (last - first) as f64)
    }

    /// Sums counters of independent runs; per-run timing marks are dropped.
    pub fn merge(&mut self, other: &CycleStats) {
        self.cycles += other.cycles;
        self.vectors_in += other.vectors_in;
        self.vectors_out += other.vectors_out;
        self.producer_stall_cycles += other.producer_stall_cycles;
        self.deferred_swaps += other.deferred_swaps;
        self.bank_swaps += other.bank_swaps;
        self.fills += other.fills;
        self.flushes += other.flushes;
        self.flush_idle_cycles += other.flush_idle_cycles;
        self.index_reloads += other.index_reloads;
        self.selector_reads += other.selector_reads;
        self.pingpong_conflicts += other.pingpong_conflicts;
        self.buffer_bytes = self.buffer_bytes.max(other.buffer_bytes);
        self.act_bits = self.act_bits.max(other.act_bits);
        self.vectors_per_bank = self.vectors_per_bank.max(other.vectors_per_bank);
        self.first_swap_cycle = None;
        self.first_emit_cycle = None;
        self.last_emit_cycle = None;
        self.first_batch = 0;
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("plain data");
        v["average_throughput"] = self.average_throughput().into();
        v["steady_state_throughput"] = self.steady_state_throughput().into();
        v["fill_latency_input_cycles"] = self.fill_latency_input_cycles().into();
        v
    }
}

#[derive(Clone, Debug)]
struct Bank<T> {
    slots: Vec<(usize, Vec<T>)>,
    map: Option<usize>,
}

impl<T> Bank<T> {
    fn empty() -> Self {
        Self { slots: Vec::new(), map: None }
    }
}

/// Cycle-stepped permutation unit. `tick` advances one bit-serial cycle.
#[derive(Clone, Debug)]
pub struct PermutationUnit<T> {
    config: SchedulerConfig,
    vpb: usize,
    cycle: u64,
    maps: Vec<PermutationMap>,
    current_map: Option<usize>,
    banks: [Bank<T>; 2],
    fill: usize,
    /// Drain progress of bank `1 - fill`: next filter offset within a group.
    drain: Option<usize>,
    staging: Vec<(usize, Vec<T>)>,
    drained: Vec<(usize, Vec<T>)>,
    stats: CycleStats,
}

impl<T: Copy + Default> PermutationUnit<T> {
    pub fn new(config: SchedulerConfig) -> Result<Self, SchedulerError> {
        let geometry = buffer_geometry(&config)?;
        Ok(Self {
            config,
            vpb: geometry.vectors_per_bank,
            cycle: 0,
            maps: Vec::new(),
            current_map: None,
            banks: [Bank::empty(), Bank::empty()],
            fill: 0,
            drain: None,
            staging: Vec::new(),
            drained: Vec::new(),
            stats: CycleStats {
                buffer_bytes: geometry.total_bytes,
                act_bits: config.act_bits as u64,
                vectors_per_bank: geometry.vectors_per_bank as u64,
                ..Default::default()
            },
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn stats(&self) -> &CycleStats {
        &self.stats
    }

    /// Loads the index registers for a new weight-stationary tile. A partially
    /// filled bank from the previous tile is flushed first.
    pub fn begin_tile(&mut self, map: PermutationMap) -> Result<(), SchedulerError> {
        if map.len() != self.config.pool_width {
            return Err(SchedulerError::Width { expected: self.config.pool_width, found: map.len() });
        }
        map.col_of_filter.iter().enumerate().try_for_each(|(f, &c)| {
            let gw = self.config.group_width();
            if f / gw == c / gw {
                Ok(())
            } else {
                Err(SchedulerError::Permutation(format!("filter {f} maps to column {c} outside its group")))
            }
        })?;
        self.end_tile();
        self.maps.push(map);
        self.current_map = Some(self.maps.len() - 1);
        self.stats.index_reloads += 1;
        Ok(())
    }

    /// Idles to the next window boundary if the fill bank is partially full.
    pub fn end_tile(&mut self) {
        let n = self.banks[self.fill].slots.len();
        if n > 0 && n < self.vpb {
            self.stats.flushes += 1;
            let before = self.cycle;
            while !self.at_boundary() {
                self.tick();
            }
            self.stats.flush_idle_cycles += self.cycle - before;
        }
    }

    fn at_boundary(&self) -> bool {
        self.cycle.is_multiple_of(self.config.window_cycles())
    }

    /// Produces one vector (in pool-column order): `A` cycles of compute, the
    /// write landing on the last. Stalls while the fill bank is full.
    pub fn push(&mut self, tag: usize, columns: Vec<T>) -> Result<(), SchedulerError> {
        if columns.len() != self.config.pool_width {
            return Err(SchedulerError::Width { expected: self.config.pool_width, found: columns.len() });
        }
        let map = self.current_map.ok_or_else(|| SchedulerError::Config("push before begin_tile".into()))?;
        for _ in 1..self.config.act_bits {
            self.tick();
        }
        let mut pending = Some((tag, columns, map));
        loop {
            self.step(&mut pending);
            if pending.is_none() {
                break;
            }
            self.stats.producer_stall_cycles += 1;
        }
        Ok(())
    }

    /// Runs until both banks are empty and returns the drained vectors
    /// (filter order) collected since the last call.
    pub fn finish(&mut self) -> Vec<(usize, Vec<T>)> {
        self.end_tile();
        while !self.banks[0].slots.is_empty() || !self.banks[1].slots.is_empty() || self.drain.is_some() {
            self.tick();
        }
        self.stats.cycles = self.cycle;
        self.take_output()
    }

    /// Drained vectors so far, in production order.
    pub fn take_output(&mut self) -> Vec<(usize, Vec<T>)> {
        std::mem::take(&mut self.drained)
    }

    pub fn tick(&mut self) {
        self.step(&mut None)
    }

    /// One cycle: swap at a window boundary, then the optional write into
    /// the fill bank (left in `write` if the bank is full), then one drain
    /// cycle on the other bank.
    fn step(&mut self, write: &mut Option<(usize, Vec<T>, usize)>) {
        if self.at_boundary() && !self.banks[self.fill].slots.is_empty() {
            if self.drain.is_none() {
                self.fill = 1 - self.fill;
                self.drain = Some(0);
                let width = self.config.pool_width;
                self.staging =
                    self.banks[1 - self.fill].slots.iter().map(|(tag, _)| (*tag, vec![T::default(); width])).collect();
                self.stats.bank_swaps += 1;
                self.stats.first_swap_cycle.get_or_insert(self.cycle);
            } else {
                self.stats.deferred_swaps += 1;
            }
        }
        let mut written = None;
        if self.banks[self.fill].slots.len() < self.vpb {
            if let Some((tag, columns, map)) = write.take() {
                let bank = &mut self.banks[self.fill];
                if bank.slots.is_empty() {
                    self.stats.fills += 1;
                }
                bank.map = Some(map);
                bank.slots.push((tag, columns));
                self.stats.vectors_in += 1;
                written = Some(self.fill);
            }
        }
        if let Some(j) = self.drain {
            let read_bank = 1 - self.fill;
            if written == Some(read_bank) {
                self.stats.pingpong_conflicts += 1;
            }
            self.drain_cycle(read_bank, j);
            if j + 1 == self.config.group_width() {
                self.emit(read_bank);
                self.drain = None;
            } else {
                self.drain = Some(j + 1);
            }
        }
        self.cycle += 1;
        self.stats.cycles = self.cycle;
    }

    fn drain_cycle(&mut self, bank: usize, j: usize) {
        let gw = self.config.group_width();
        let map = &self.maps[self.banks[bank].map.expect("filled bank has a map")];
        let slots = &self.banks[bank].slots;
        for ((_, input), (_, out)) in slots.iter().zip(self.staging.iter_mut()) {
            for g in 0..self.config.groups {
                let f = g * gw + j;
                out[f] = input[map.col_of_filter[f]];
            }
        }
        self.stats.selector_reads += (slots.len() * self.config.groups) as u64;
    }

    fn emit(&mut self, bank: usize) {
        let n = self.banks[bank].slots.len() as u64;
        self.banks[bank] = Bank::empty();
        self.stats.vectors_out += n;
        if self.stats.first_emit_cycle.is_none() {
            self.stats.first_emit_cycle = Some(self.cycle);
            self.stats.first_batch = n;
        }
        self.stats.last_emit_cycle = Some(self.cycle);
        self.drained.append(&mut self.staging);
    }
}

/// Streams `vectors` (pool-column order) through a fresh unit under one map.
pub fn simulate_stream<T: Copy + Default>(
    config: &SchedulerConfig,
    map: &PermutationMap,
    vectors: &[Vec<T>],
) -> Result<(Vec<Vec<T>>, CycleStats), SchedulerError> {
    let mut unit = PermutationUnit::new(*config)?;
    unit.begin_tile(map.clone())?;
    for (i, v) in vectors.iter().enumerate() {
        unit.push(i, v.clone())?;
    }
    let out = unit.finish().into_iter().map(|(_, v)| v).collect();
    Ok((out, unit.stats().clone()))
}

/// Like [`simulate_stream`], but each vector carries the cycle at which its
/// producer starts it. Starts closer than one input cycle apart violate the
/// producer rate; later starts leave the unit idle.
pub fn simulate_timed_stream<T: Copy + Default>(
    config: &SchedulerConfig,
    map: &PermutationMap,
    vectors: &[(u64, Vec<T>)],
) -> Result<(Vec<Vec<T>>, CycleStats), SchedulerError> {
    let mut unit = PermutationUnit::new(*config)?;
    unit.begin_tile(map.clone())?;
    let a = config.act_bits as u64;
    let mut earliest = 0;
    for (i, (start, v)) in vectors.iter().enumerate() {
        if *start < earliest {
            return Err(SchedulerError::Rate { index: i, cycle: *start, earliest });
        }
        while unit.cycle() < *start {
            unit.tick();
        }
        unit.push(i, v.clone())?;
        earliest = unit.cycle();
        debug_assert!(earliest >= start + a);
    }
    let out = unit.finish().into_iter().map(|(_, v)| v).collect();
    Ok((out, unit.stats().clone()))
}

/// Bit-serial cycles a layer occupies when each tile streams `vectors_per_tile`
/// inputs back to back: whole windows per tile plus the final drain.
pub fn analytic_layer_cycles(config: &SchedulerConfig, tiles: usize, vectors_per_tile: usize) -> Result<u64, SchedulerError> {
    let g = buffer_geometry(config)?;
    if tiles == 0 || vectors_per_tile == 0 {
        return Ok(0);
    }
    let windows = vectors_per_tile.div_ceil(g.vectors_per_bank) as u64;
    Ok((tiles as u64 * windows + 1) * config.window_cycles())
}
