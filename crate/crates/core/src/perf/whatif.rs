//! Predicted execution times over a grid of images, epochs and threads.

use std::fmt::Write as _;

use super::{predict_time, PerfModelParams, WorkloadSpec};

/// Cross product to evaluate: one block per thread count, one row per
/// `(i, it)` pair, one column per epoch count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhatIfGrid {
    pub images: Vec<(u64, u64)>,
    pub epochs: Vec<u64>,
    pub threads: Vec<u64>,
}

impl Default for WhatIfGrid {
    /// 60k/10k, 120k/20k and 240k/40k images; 70 to 560 epochs; 240 and
    /// 480 threads.
    fn default() -> Self {
        WhatIfGrid {
            images: vec![(60_000, 10_000), (120_000, 20_000), (240_000, 40_000)],
            epochs: vec![70, 140, 280, 560],
            threads: vec![240, 480],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfRow {
    pub train_images: u64,
    pub test_images: u64,
    /// Predicted minutes, one per epoch column.
    pub minutes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfBlock {
    pub threads: u64,
    pub rows: Vec<WhatIfRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfTable {
    pub epochs: Vec<u64>,
    pub blocks: Vec<WhatIfBlock>,
}

pub fn what_if(params: &PerfModelParams, grid: &WhatIfGrid) -> WhatIfTable {
    let blocks = grid
        .threads
        .iter()
        .map(|&p| WhatIfBlock {
            threads: p,
            rows: grid
                .images
                .iter()
                .map(|&(i, it)| WhatIfRow {
                    train_images: i,
                    test_images: it,
                    minutes: grid
                        .epochs
                        .iter()
                        .map(|&ep| predict_time(params, &WorkloadSpec::new(i, it, ep, p)) / 60.0)
                        .collect(),
                })
                .collect(),
        })
        .collect();
    WhatIfTable {
        epochs: grid.epochs.clone(),
        blocks,
    }
}

impl WhatIfTable {
    /// Minutes at `(threads, i, ep)`, if that cell exists.
    pub fn cell(&self, threads: u64, train_images: u64, epochs: u64) -> Option<f64> {
        let col = self.epochs.iter().position(|&e| e == epochs)?;
        let block = self.blocks.iter().find(|b| b.threads == threads)?;
        let row = block.rows.iter().find(|r| r.train_images == train_images)?;
        Some(row.minutes[col])
    }

    /// Header `threads,train_images,test_images,ep_<n>...`, one line per
    /// block row, minutes with one decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threads,train_images,test_images");
        for ep in &self.epochs {
            let _ = write!(out, ",ep_{ep}");
        }
        out.push('\n');
        for block in &self.blocks {
            for row in &block.rows {
                let _ = write!(out, "{},{},{}", block.threads, row.train_images, row.test_images);
                for m in &row.minutes {
                    let _ = write!(out, ",{m:.1}");
                }
                out.push('\n');
            }
        }
        out
    }
}
