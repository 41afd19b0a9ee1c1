//! Functional model of a 1-bit-cell SRAM compute-in-memory array.
//!
//! Rows take input bits, columns accumulate. Each column is stored as a
//! bitmask of its `+1` cells, so for an input bitplane `x`
//! `sum_c = popcount(x & pos_c) - popcount(x & !pos_c) = 2·popcount(x & pos_c) - popcount(x)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArrayError {
    #[error("cell matrix is {rows}x{cols}, array takes at most {max_rows} rows and exactly {expected_cols} columns")]
    Shape { rows: usize, cols: usize, max_rows: usize, expected_cols: usize },
    #[error("cell buffer holds {found} values for a {rows}x{cols} matrix")]
    CellCount { rows: usize, cols: usize, found: usize },
    #[error("cell {index} is {value}, cells must be -1 or +1")]
    NonBinary { index: usize, value: i8 },
    #[error("input has {found} rows, array is loaded with {expected}")]
    Length { expected: usize, found: usize },
    #[error("input {index} = {value} does not fit in {bits} unsigned bits")]
    InputRange { index: usize, value: u32, bits: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdcMode {
    #[default]
    Ideal,
    Saturating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdcModel {
    pub bits: u32,
    pub mode: AdcMode,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self { bits: 8, mode: AdcMode::Ideal }
    }
}

impl AdcModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn saturating(bits: u32) -> Self {
        Self { bits, mode: AdcMode::Saturating }
    }

    /// Output range of the converter.
    pub fn range(&self) -> (i64, i64) {
        let half = 1i64 << (self.bits - 1);
        (-half, half - 1)
    }

    pub fn convert(&self, x: i64) -> i64 {
        match self.mode {
            AdcMode::Ideal => x,
            AdcMode::Saturating => {
                let (lo, hi) = self.range();
                x.clamp(lo, hi)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ArrayError> {
        if !(1..=32).contains(&self.bits) {
            return Err(ArrayError::Config(format!("ADC bits {} outside 1..=32", self.bits)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSerialConfig {
    /// Activation width `A`; inputs are unsigned, fed LSB first.
    pub act_bits: u32,
}

impl Default for BitSerialConfig {
    fn default() -> Self {
        Self { act_bits: 8 }
    }
}

impl BitSerialConfig {
    pub fn validate(&self) -> Result<(), ArrayError> {
        if !(1..=16).contains(&self.act_bits) {
            return Err(ArrayError::Config(format!("act_bits {} outside 1..=16", self.act_bits)));
        }
        Ok(())
    }

    pub fn max_input(&self) -> u32 {
        (1u32 << self.act_bits) - 1
    }
}

/// Input bits packed per row, LSB-first within 64-bit words.
pub type Bitplane = Vec<u64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CimArray {
    max_rows: usize,
    cols: usize,
    rows: usize,
    words: usize,
    /// `cols` masks of `words` words each.
    positive: Vec<u64>,
    writes: u64,
}

impl CimArray {
    /// An unloaded array with room for `max_rows` rows.
    pub fn new(max_rows: usize, cols: usize) -> Self {
        Self { max_rows, cols, rows: 0, words: 0, positive: Vec::new(), writes: 0 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn max_rows(&self) -> usize {
        self.max_rows
    }

    /// Completed `load_weights` calls.
    pub fn write_count(&self) -> u64 {
        self.writes
    }

    /// Replaces the contents with a `rows × cols` row-major matrix over ±1.
    pub fn load_weights(&mut self, cells: &[i8], rows: usize) -> Result<(), ArrayError> {
        if rows > self.max_rows {
            return Err(ArrayError::Shape { rows, cols: self.cols, max_rows: self.max_rows, expected_cols: self.cols });
        }
        if cells.len() != rows * self.cols {
            return Err(ArrayError::CellCount { rows, cols: self.cols, found: cells.len() });
        }
        if let Some((index, &value)) = cells.iter().enumerate().find(|(_, &c)| c != 1 && c != -1) {
            return Err(ArrayError::NonBinary { index, value });
        }
        let words = rows.div_ceil(64);
        let mut positive = vec![0u64; words * self.cols];
        for (i, &c) in cells.iter().enumerate() {
            if c == 1 {
                let (r, col) = (i / self.cols, i % self.cols);
                positive[col * words + r / 64] |= 1 << (r % 64);
            }
        }
        self.rows = rows;
        self.words = words;
        self.positive = positive;
        self.writes += 1;
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> i8 {
        if (self.positive[col * self.words + row / 64] >> (row % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Row-major read-back of the loaded matrix.
    pub fn cells(&self) -> Vec<i8> {
        (0..self.rows).flat_map(|r| (0..self.cols).map(move |c| (r, c))).map(|(r, c)| self.cell(r, c)).collect()
    }

    /// Bit-line sums for one input bitplane.
    pub fn column_sums(&self, bitplane: &[bool]) -> Result<Vec<i32>, ArrayError> {
        if bitplane.len() != self.rows {
            return Err(ArrayError::Length { expected: self.rows, found: bitplane.len() });
        }
        let mut packed = vec![0u64; self.words];
        for (r, &b) in bitplane.iter().enumerate() {
            if b {
                packed[r / 64] |= 1 << (r % 64);
            }
        }
        let mut out = vec![0; self.cols];
        self.column_sums_packed(&packed, &mut out);
        Ok(out)
    }

    fn column_sums_packed(&self, plane: &[u64], out: &mut [i32]) {
        let active: u32 = plane.iter().map(|w| w.count_ones()).sum();
        for (c, o) in out.iter_mut().enumerate() {
            let mask = &self.positive[c * self.words..(c + 1) * self.words];
            let pos: u32 = mask.iter().zip(plane).map(|(m, p)| (m & p).count_ones()).sum();
            *o = 2 * pos as i32 - active as i32;
        }
    }

    /// Splits unsigned inputs into `act_bits` bitplanes, LSB first.
    pub fn bitplanes(&self, cfg: &BitSerialConfig, input: &[u32]) -> Result<Vec<Bitplane>, ArrayError> {
        cfg.validate()?;
        if input.len() != self.rows {
            return Err(ArrayError::Length { expected: self.rows, found: input.len() });
        }
        if let Some((index, &value)) = input.iter().enumerate().find(|(_, &x)| x > cfg.max_input()) {
            return Err(ArrayError::InputRange { index, value, bits: cfg.act_bits });
        }
        Ok((0..cfg.act_bits)
            .map(|b| {
                let mut plane = vec![0u64; self.words];
                for (r, &x) in input.iter().enumerate() {
                    plane[r / 64] |= (((x >> b) & 1) as u64) << (r % 64);
                }
                plane
            })
            .collect())
    }

    /// `Σ_b 2^b · adc(column_sums(plane_b))`, with planes taken LSB first.
    pub fn bit_serial_matvec(&self, adc: &AdcModel, cfg: &BitSerialConfig, input: &[u32]) -> Result<Vec<i64>, ArrayError> {
        adc.validate()?;
        let planes = self.bitplanes(cfg, input)?;
        let mut acc = vec![0i64; self.cols];
        let mut sums = vec![0i32; self.cols];
        for (b, plane) in planes.iter().enumerate() {
            self.column_sums_packed(plane, &mut sums);
            for (a, &s) in acc.iter_mut().zip(&sums) {
                *a += adc.convert(s as i64) << b;
            }
        }
        Ok(acc)
    }
}
