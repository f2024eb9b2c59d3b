//! Bar-position hidden Markov model over tatums.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{read_f64_blob, write_f64_blob, Manifest};
use crate::tatum::TatumGrid;

/// Bar lengths in tatums used by default.
pub const DEFAULT_BAR_LENGTHS: [usize; 10] = [3, 4, 5, 6, 7, 8, 9, 10, 12, 16];
pub const TRANSITION_FLOOR: f64 = 0.02;
pub const LOG_FLOOR: f64 = 1e-300;
/// Largest instance `brute_force_decode` accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;
pub const HMM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarStateSpace {
    pub lengths: Vec<usize>,
    /// `(bar_length, position)` with positions counted from 1.
    pub states: Vec<(usize, usize)>,
    /// Indices of position-1 states.
    pub h1: Vec<usize>,
}

impl BarStateSpace {
    pub fn new(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::invalid("state space needs at least one bar length"));
        }
        let set: BTreeSet<usize> = lengths.iter().copied().collect();
        if set.len() != lengths.len() {
            return Err(Error::invalid(format!("repeated bar length in {lengths:?}")));
        }
        if let Some(l) = set.iter().find(|&&l| l < 2) {
            return Err(Error::invalid(format!("bar length {l} is below 2")));
        }
        let lengths: Vec<usize> = set.into_iter().collect();
        let mut states = Vec::new();
        let mut h1 = Vec::new();
        for &len in &lengths {
            h1.push(states.len());
            states.extend((1..=len).map(|p| (len, p)));
        }
        Ok(Self { lengths, states, h1 })
    }

    pub fn standard() -> Self {
        Self::new(&DEFAULT_BAR_LENGTHS).expect("valid lengths")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_h1(&self, state: usize) -> bool {
        self.states[state].1 == 1
    }

    pub fn index_of(&self, length: usize, position: usize) -> Option<usize> {
        self.states.iter().position(|&s| s == (length, position))
    }

    /// The state a bar of `length` moves to from `state` without a change of meter.
    pub fn successor(&self, state: usize) -> usize {
        let (len, pos) = self.states[state];
        if pos == len {
            state + 1 - len
        } else {
            state + 1
        }
    }

    /// Allowed length closest to `n`; the shorter on ties.
    pub fn snap_length(&self, n: usize) -> usize {
        *self
            .lengths
            .iter()
            .min_by_key(|&&l| (l.abs_diff(n), l))
            .expect("nonempty")
    }

    pub fn describe(&self) -> String {
        self.lengths
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Row-stochastic transition matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub n: usize,
    pub a: Vec<f64>,
}

impl TransitionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn log(&self) -> Vec<f64> {
        self.a.iter().map(|&v| v.max(LOG_FLOOR).ln()).collect()
    }

    pub fn save(&self, path: &Path, space: &BarStateSpace, boost: f64) -> Result<()> {
        let blob = path.with_extension("bin");
        write_f64_blob(&blob, &self.a)?;
        let mut m = Manifest::new();
        m.set("format_version", HMM_FORMAT_VERSION)
            .set("bar_lengths", space.describe())
            .set("states", space.len())
            .set("boost", boost)
            .set(
                "blob",
                blob.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            );
        m.write(path)
    }

    pub fn load(path: &Path) -> Result<(BarStateSpace, TransitionMatrix)> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let m = Manifest::read(path)?;
        let version: u32 = m.parse_value("format_version", path)?;
        if version != HMM_FORMAT_VERSION {
            return Err(Error::malformed(path, format!("unsupported format_version {version}")));
        }
        let lengths = parse_lengths(m.require("bar_lengths", path)?)
            .map_err(|e| Error::malformed(path, e.to_string()))?;
        let space = BarStateSpace::new(&lengths).map_err(|e| Error::malformed(path, e.to_string()))?;
        let blob = path.with_file_name(m.require("blob", path)?);
        let a = read_f64_blob(&blob)?;
        if a.len() != space.len() * space.len() {
            return Err(Error::malformed(&blob, format!("{} values for {} states", a.len(), space.len())));
        }
        Ok((space.clone(), TransitionMatrix { n: space.len(), a }))
    }
}

/// Parses a comma-separated list of bar lengths.
pub fn parse_lengths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad bar length `{}`", p.trim())))
        })
        .collect()
}

fn normalize_rows(a: &mut [f64], n: usize) {
    for row in a.chunks_exact_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
}

/// Transition row for a state never seen in training: advance with 0.9;
/// an end-of-bar state also spreads 0.09 over the position-1 states; the rest
/// is spread uniformly.
fn prior_row(space: &BarStateSpace, i: usize) -> Vec<f64> {
    let n = space.len();
    let (len, pos) = space.states[i];
    let mut row = vec![0.0; n];
    row[space.successor(i)] += 0.9;
    let mut rest = 0.1;
    if pos == len {
        for &h in &space.h1 {
            row[h] += 0.09 / space.h1.len() as f64;
        }
        rest -= 0.09;
    }
    row.iter_mut().for_each(|v| *v += rest / n as f64);
    row
}

/// Counts transitions in the annotated state sequences, floors each observed
/// row at `TRANSITION_FLOOR`, multiplies end-of-bar to same-length position-1
/// entries by `boost`, and renormalizes every row.
pub fn train_transitions(space: &BarStateSpace, sequences: &[Vec<usize>], boost: f64) -> Result<TransitionMatrix> {
    let n = space.len();
    let mut counts = vec![0.0; n * n];
    for seq in sequences {
        if let Some(&bad) = seq.iter().find(|&&s| s >= n) {
            return Err(Error::invalid(format!("state {bad} outside a {n}-state space")));
        }
        for w in seq.windows(2) {
            counts[w[0] * n + w[1]] += 1.0;
        }
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let row = &counts[i * n..(i + 1) * n];
        let total: f64 = row.iter().sum();
        let out = &mut a[i * n..(i + 1) * n];
        if total > 0.0 {
            for (o, c) in out.iter_mut().zip(row) {
                *o = c / total;
            }
        } else {
            out.copy_from_slice(&prior_row(space, i));
        }
        for o in out.iter_mut() {
            *o = o.max(TRANSITION_FLOOR);
        }
    }
    normalize_rows(&mut a, n);
    if boost != 1.0 {
        for (i, &(len, pos)) in space.states.iter().enumerate() {
            if pos == len {
                a[i * n + space.successor(i)] *= boost;
            }
        }
        normalize_rows(&mut a, n);
    }
    Ok(TransitionMatrix { n, a })
}

/// Matrix used when no annotations are available.
pub fn prior_transitions(space: &BarStateSpace) -> TransitionMatrix {
    train_transitions(space, &[], 1.0).expect("no sequences to validate")
}

/// State sequence for the tatums between the first and last annotated
/// downbeat. Each bar's tatum count is snapped to an allowed length and
/// positions are spread over it. Returns the first tatum index and the states.
pub fn annotate_states(space: &BarStateSpace, downbeat_tatums: &[usize]) -> Option<(usize, Vec<usize>)> {
    let first = *downbeat_tatums.first()?;
    let mut seq = Vec::new();
    for w in downbeat_tatums.windows(2) {
        let count = w[1] - w[0];
        if count == 0 {
            continue;
        }
        let len = space.snap_length(count);
        let start = space.index_of(len, 1).expect("snapped length exists");
        for k in 0..count {
            seq.push(start + k * len / count);
        }
    }
    if seq.is_empty() {
        return None;
    }
    Some((first, seq))
}

/// `emissions[k][i]`: `d(k)` for position-1 states, `1 - d(k)` otherwise.
pub fn emissions_from_likelihood(space: &BarStateSpace, d: &[f64]) -> Vec<Vec<f64>> {
    d.iter()
        .map(|&dk| {
            space
                .states
                .iter()
                .map(|&(_, p)| if p == 1 { dk } else { 1.0 - dk })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub states: Vec<usize>,
    pub downbeat_tatums: Vec<usize>,
    pub log_prob: f64,
}

impl DecodedPath {
    fn new(space: &BarStateSpace, states: Vec<usize>, log_prob: f64) -> Self {
        let downbeat_tatums = states
            .iter()
            .enumerate()
            .filter(|(_, &s)| space.is_h1(s))
            .map(|(k, _)| k)
            .collect();
        Self {
            states,
            downbeat_tatums,
            log_prob,
        }
    }
}

fn check_emissions(space: &BarStateSpace, a: &TransitionMatrix, emissions: &[Vec<f64>]) -> Result<()> {
    if a.n != space.len() {
        return Err(Error::Shape(format!(
            "{}-state matrix for a {}-state space",
            a.n,
            space.len()
        )));
    }
    if let Some(col) = emissions.iter().find(|c| c.len() != space.len()) {
        return Err(Error::Shape(format!(
            "emission column of {} values for {} states",
            col.len(),
            space.len()
        )));
    }
    Ok(())
}

fn log_emissions(emissions: &[Vec<f64>]) -> Vec<Vec<f64>> {
    emissions
        .iter()
        .map(|c| c.iter().map(|&e| e.max(LOG_FLOOR).ln()).collect())
        .collect()
}

/// Log-domain Viterbi with uniform initial probabilities. Ties go to the
/// lowest state index, both for the final state and for each predecessor.
pub fn viterbi(space: &BarStateSpace, a: &TransitionMatrix, emissions: &[Vec<f64>]) -> Result<DecodedPath> {
    check_emissions(space, a, emissions)?;
    let n = space.len();
    let steps = emissions.len();
    if steps == 0 {
        return Ok(DecodedPath::new(space, Vec::new(), 0.0));
    }
    let la = a.log();
    let le = log_emissions(emissions);
    let log_pi = -(n as f64).ln();
    let mut delta: Vec<f64> = le[0].iter().map(|&e| log_pi + e).collect();
    let mut back = vec![0usize; steps * n];
    let mut next = vec![0.0; n];
    for k in 1..steps {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..n {
                let v = delta[i] + la[i * n + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + le[k][j];
            back[k * n + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for j in 1..n {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let log_prob = delta[last];
    let mut states = vec![0; steps];
    states[steps - 1] = last;
    for k in (1..steps).rev() {
        states[k - 1] = back[k * n + states[k]];
    }
    debug_assert!(states.windows(2).all(|w| a.get(w[0], w[1]) > 0.0));
    Ok(DecodedPath::new(space, states, log_prob))
}

/// Log-probability of a given path, accumulated in the same order as `viterbi`.
pub fn path_log_prob(space: &BarStateSpace, a: &TransitionMatrix, emissions: &[Vec<f64>], states: &[usize]) -> f64 {
    let n = space.len();
    let la = a.log();
    let le = log_emissions(emissions);
    let mut lp = -(n as f64).ln() + le[0][states[0]];
    for k in 1..states.len() {
        lp = lp + la[states[k - 1] * n + states[k]] + le[k][states[k]];
    }
    lp
}

/// Exhaustive search. Among equally probable paths it returns the one that is
/// smallest when compared from the last tatum backwards, which is the path
/// `viterbi` recovers.
pub fn brute_force_decode(space: &BarStateSpace, a: &TransitionMatrix, emissions: &[Vec<f64>]) -> Result<DecodedPath> {
    check_emissions(space, a, emissions)?;
    let n = space.len();
    let steps = emissions.len();
    let size = (n as f64).powi(steps as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(size));
    }
    if steps == 0 {
        return Ok(DecodedPath::new(space, Vec::new(), 0.0));
    }
    let la = a.log();
    let le = log_emissions(emissions);
    let log_pi = -(n as f64).ln();

    struct Search<'a> {
        n: usize,
        la: &'a [f64],
        le: &'a [Vec<f64>],
        path: Vec<usize>,
        best: Vec<usize>,
        best_lp: f64,
    }
    impl Search<'_> {
        fn better(&self, lp: f64) -> bool {
            if self.best.is_empty() || lp != self.best_lp {
                return self.best.is_empty() || lp > self.best_lp;
            }
            self.path.iter().rev().lt(self.best.iter().rev())
        }
        fn go(&mut self, k: usize, lp: f64) {
            if k == self.le.len() {
                if self.better(lp) {
                    self.best_lp = lp;
                    self.best.clone_from(&self.path);
                }
                return;
            }
            let prev = self.path[k - 1];
            for j in 0..self.n {
                let a = self.la[prev * self.n + j];
                self.path.push(j);
                self.go(k + 1, lp + a + self.le[k][j]);
                self.path.pop();
            }
        }
    }
    let mut s = Search {
        n,
        la: &la,
        le: &le,
        path: Vec::with_capacity(steps),
        best: Vec::new(),
        best_lp: f64::NEG_INFINITY,
    };
    for i in 0..n {
        s.path.push(i);
        s.go(1, log_pi + le[0][i]);
        s.path.pop();
    }
    Ok(DecodedPath::new(space, s.best, s.best_lp))
}

pub fn states_to_downbeats(path: &DecodedPath, grid: &TatumGrid) -> Result<Vec<f64>> {
    if path.states.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} decoded states for {} tatums",
            path.states.len(),
            grid.len()
        )));
    }
    if path.downbeat_tatums.is_empty() && !path.states.is_empty() {
        log::warn!("decoded path never visits a bar start");
    }
    Ok(path.downbeat_tatums.iter().map(|&k| grid.tatum_times[k]).collect())
}

/// Tatums whose likelihood exceeds `threshold`.
pub fn threshold_baseline(d: &[f64], threshold: f64) -> Vec<usize> {
    d.iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(k, _)| k)
        .collect()
}
