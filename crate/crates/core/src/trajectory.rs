//! Path simulation and the deterministic replication harness.

use rayon::prelude::*;

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampler::{offspring_total_unchecked, sample_immigration, AtomTable, Count, DEFAULT_PROMOTION_THRESHOLD, MAX_PROMOTION_THRESHOLD};

/// Numerical settings shared by every simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    /// Populations at or above this size are carried in log space.
    pub promotion_threshold: u64,
    /// Worker threads for batches; 0 uses the ambient rayon pool.
    pub threads: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { promotion_threshold: DEFAULT_PROMOTION_THRESHOLD, threads: 0 }
    }
}

impl SimSettings {
    pub fn with_threads(self, threads: usize) -> Self {
        Self { threads, ..self }
    }

    pub fn with_threshold(self, promotion_threshold: u64) -> Self {
        Self { promotion_threshold, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.promotion_threshold < 2 || self.promotion_threshold > MAX_PROMOTION_THRESHOLD {
            return Err(Error::pre(format!(
                "promotion threshold must lie in [2, 2^56], got {}",
                self.promotion_threshold
            )));
        }
        Ok(())
    }

    /// Runs `f` on a pool with the configured number of threads.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        if self.threads == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Resource(format!("cannot build thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// One simulated path of `n` generations.
///
/// Index `k` of `log_z`, `s` and `log_w` refers to generation `k`;
/// `atom_idx[k]` is the environment that produced generation `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub atom_idx: Vec<usize>,
    pub log_z: Vec<f64>,
    /// `S_k = sum_{j < k} log m_j`.
    pub s: Vec<f64>,
    /// `log W_k = log Z_k - S_k`.
    pub log_w: Vec<f64>,
    /// Coupled no-immigration path, when requested.
    pub log_zbar: Option<Vec<f64>>,
}

/// Per-environment constants used inside the generation loop.
struct Prepared<'a> {
    env: &'a EnvironmentModel,
    table: AtomTable,
    log_means: Vec<f64>,
    threshold: u64,
}

impl<'a> Prepared<'a> {
    fn new(env: &'a EnvironmentModel, settings: &SimSettings) -> Result<Self> {
        env.ensure_valid()?;
        settings.check()?;
        Ok(Self {
            env,
            table: AtomTable::new(env),
            log_means: env.log_means(),
            threshold: settings.promotion_threshold,
        })
    }
}

/// State of one replicate between generations.
struct PathState {
    z: Count,
    zbar: Option<Count>,
    s: f64,
}

impl PathState {
    fn new(coupled: bool) -> Self {
        Self { z: Count::ONE, zbar: coupled.then_some(Count::ONE), s: 0.0 }
    }

    /// Advances from generation `k` to `k + 1`; returns the atom index.
    ///
    /// Draw order within the generation's substream: atom, coupled
    /// aggregate (if any), remaining aggregate, immigration.
    #[inline]
    fn step(&mut self, p: &Prepared<'_>, base: &RngStream, k: usize) -> usize {
        let t = p.threshold;
        let mut rng = base.substream(k as u32);
        let atom_i = p.table.sample(&mut rng);
        let atom = &p.env.atoms[atom_i];
        let offspring = match self.zbar {
            None => offspring_total_unchecked(self.z, &atom.offspring, &mut rng, t),
            Some(zbar) => {
                let bar_total = offspring_total_unchecked(zbar, &atom.offspring, &mut rng, t);
                let total = match self.z.saturating_sub(zbar, t) {
                    Some(surplus) => {
                        bar_total.add(offspring_total_unchecked(surplus, &atom.offspring, &mut rng, t), t)
                    }
                    None => bar_total,
                };
                self.zbar = Some(bar_total);
                total
            }
        };
        let offspring = at_least(offspring, self.z);
        let y = sample_immigration(&atom.immigration, &mut rng);
        self.z = offspring.add(Count::Exact(y), t);
        self.s += p.log_means[atom_i];
        atom_i
    }
}

/// Keeps log-space rounding from ever shrinking the population.
#[inline]
fn at_least(c: Count, floor: Count) -> Count {
    match (c, floor) {
        (Count::LogSpace(a), _) if a < floor.ln() => Count::LogSpace(floor.ln()),
        _ => c,
    }
}

/// Simulates `n` generations on stream `rng`, starting from `Z_0 = 1`.
pub fn simulate_path(
    env: &EnvironmentModel,
    n: usize,
    rng: &RngStream,
    couple_no_immigration: bool,
    settings: &SimSettings,
) -> Result<Trajectory> {
    let prepared = Prepared::new(env, settings)?;
    check_generations(n)?;
    let mut state = PathState::new(couple_no_immigration);
    let mut traj = Trajectory {
        n,
        atom_idx: Vec::with_capacity(n),
        log_z: vec![0.0],
        s: vec![0.0],
        log_w: vec![0.0],
        log_zbar: couple_no_immigration.then(|| vec![0.0]),
    };
    for k in 0..n {
        traj.atom_idx.push(state.step(&prepared, rng, k));
        let lz = state.z.ln();
        traj.log_z.push(lz);
        traj.s.push(state.s);
        traj.log_w.push(lz - state.s);
        if let (Some(bar), Some(zbar)) = (traj.log_zbar.as_mut(), state.zbar) {
            bar.push(zbar.ln());
        }
    }
    Ok(traj)
}

fn check_generations(n: usize) -> Result<()> {
    if n > u32::MAX as usize {
        return Err(Error::pre("at most 2^32 - 1 generations"));
    }
    Ok(())
}

/// What to simulate in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRequest {
    pub generations: usize,
    pub replicates: usize,
    pub master_seed: u64,
    /// Generations to record; must lie in `0..=generations`.
    pub record: Vec<usize>,
    /// Replicate `i` uses stream id `stream_offset + i`.
    pub stream_offset: u64,
    pub couple_no_immigration: bool,
}

impl BatchRequest {
    pub fn new(generations: usize, replicates: usize, master_seed: u64, record: Vec<usize>) -> Self {
        Self { generations, replicates, master_seed, record, stream_offset: 0, couple_no_immigration: false }
    }

    pub fn with_stream_offset(self, stream_offset: u64) -> Self {
        Self { stream_offset, ..self }
    }

    pub fn coupled(self) -> Self {
        Self { couple_no_immigration: true, ..self }
    }

    fn check(&self) -> Result<()> {
        check_generations(self.generations)?;
        if self.replicates == 0 {
            return Err(Error::pre("batch needs at least one replicate"));
        }
        if let Some(&k) = self.record.iter().find(|&&k| k > self.generations) {
            return Err(Error::pre(format!("recorded generation {k} exceeds horizon {}", self.generations)));
        }
        if self.stream_offset.checked_add(self.replicates as u64).is_none() {
            return Err(Error::pre("stream ids overflow u64"));
        }
        Ok(())
    }

    fn record_set(&self) -> Vec<usize> {
        let mut r = self.record.clone();
        r.sort_unstable();
        r.dedup();
        r
    }
}

/// Column-oriented batch output: `log_z[j][i]` is replicate `i` at
/// generation `record[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSamples {
    /// Sorted, deduplicated recorded generations.
    pub record: Vec<usize>,
    pub log_z: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub log_w: Vec<Vec<f64>>,
    pub log_zbar: Option<Vec<Vec<f64>>>,
}

impl BatchSamples {
    pub fn replicates(&self) -> usize {
        self.log_z.first().map_or(0, Vec::len)
    }

    /// Column position of generation `k`.
    pub fn index_of(&self, k: usize) -> Option<usize> {
        self.record.binary_search(&k).ok()
    }

    pub fn log_z_at(&self, k: usize) -> Option<&[f64]> {
        self.index_of(k).map(|j| self.log_z[j].as_slice())
    }

    pub fn s_at(&self, k: usize) -> Option<&[f64]> {
        self.index_of(k).map(|j| self.s[j].as_slice())
    }

    pub fn log_w_at(&self, k: usize) -> Option<&[f64]> {
        self.index_of(k).map(|j| self.log_w[j].as_slice())
    }

    pub fn log_zbar_at(&self, k: usize) -> Option<&[f64]> {
        let j = self.index_of(k)?;
        self.log_zbar.as_ref().map(|c| c[j].as_slice())
    }
}

/// Replicates per parallel work item.
const CHUNK: usize = 256;

fn run_rows(
    req: &BatchRequest,
    settings: &SimSettings,
    width: usize,
    fill: impl Fn(u64, &mut [f64]) + Sync,
) -> Result<Vec<f64>> {
    let cells = req
        .replicates
        .checked_mul(width)
        .filter(|&c| c.checked_mul(std::mem::size_of::<f64>()).is_some())
        .ok_or_else(|| Error::Resource(format!("{} replicates x {width} values overflows memory", req.replicates)))?;
    let mut rows = Vec::new();
    rows.try_reserve_exact(cells)
        .map_err(|e| Error::Resource(format!("cannot allocate {cells} values: {e}")))?;
    rows.resize(cells, 0.0);
    settings.install(|| {
        rows.par_chunks_mut(width * CHUNK).enumerate().for_each(|(c, chunk)| {
            for (i, row) in chunk.chunks_mut(width).enumerate() {
                fill(req.stream_offset + (c * CHUNK + i) as u64, row);
            }
        })
    })?;
    Ok(rows)
}

fn columns(rows: &[f64], width: usize, col: usize, stride: usize, ncols: usize) -> Vec<Vec<f64>> {
    (0..ncols)
        .map(|j| rows.chunks(width).map(|r| r[col + j * stride]).collect())
        .collect()
}

/// Simulates `replicates` independent paths and keeps the recorded
/// generations. Output is identical for every thread count.
pub fn simulate_batch(env: &EnvironmentModel, req: &BatchRequest, settings: &SimSettings) -> Result<BatchSamples> {
    req.check()?;
    let prepared = Prepared::new(env, settings)?;
    let record = req.record_set();
    let nrec = record.len();
    let coupled = req.couple_no_immigration;
    let per_gen = if coupled { 4 } else { 3 };
    let width = (nrec * per_gen).max(1);
    let horizon = record.last().copied().unwrap_or(0);

    let rows = run_rows(req, settings, width, |stream_id, row| {
        let base = RngStream::new(req.master_seed, stream_id);
        let mut state = PathState::new(coupled);
        let mut next = 0;
        for k in 0..=horizon {
            if k > 0 {
                state.step(&prepared, &base, k - 1);
            }
            if next < nrec && record[next] == k {
                let lz = state.z.ln();
                let cell = &mut row[next * per_gen..(next + 1) * per_gen];
                cell[0] = lz;
                cell[1] = state.s;
                cell[2] = lz - state.s;
                if let Some(zbar) = state.zbar {
                    cell[3] = zbar.ln();
                }
                next += 1;
            }
        }
    })?;

    Ok(BatchSamples {
        log_z: columns(&rows, width, 0, per_gen, nrec),
        s: columns(&rows, width, 1, per_gen, nrec),
        log_w: columns(&rows, width, 2, per_gen, nrec),
        log_zbar: coupled.then(|| columns(&rows, width, 3, per_gen, nrec)),
        record,
    })
}

/// Simulates only the associated random walk `S_k = sum_{j<k} log m_j`.
///
/// Atom draws come first in every generation's substream, so for the same
/// `(master_seed, stream id)` this reproduces the `S` column of
/// [`simulate_batch`] exactly. Returns `s[j][i]` for generation `record[j]`.
pub fn simulate_walk_batch(
    env: &EnvironmentModel,
    req: &BatchRequest,
    settings: &SimSettings,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    req.check()?;
    let prepared = Prepared::new(env, settings)?;
    let record = req.record_set();
    let nrec = record.len();
    let width = nrec.max(1);
    let horizon = record.last().copied().unwrap_or(0);
    let rows = run_rows(req, settings, width, |stream_id, row| {
        let base = RngStream::new(req.master_seed, stream_id);
        let mut s = 0.0;
        let mut next = 0;
        for k in 0..=horizon {
            if k > 0 {
                let mut rng = base.substream((k - 1) as u32);
                s += prepared.log_means[prepared.table.sample(&mut rng)];
            }
            if next < nrec && record[next] == k {
                row[next] = s;
                next += 1;
            }
        }
    })?;
    let cols = columns(&rows, width, 0, 1, nrec);
    Ok((record, cols))
}
