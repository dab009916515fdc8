//! Archives of solved schedules and the precomputed parameter lattice.
//!
//! An archive file is
//!
//! ```text
//! "DSA\0" | version u32 | header length u32 | JSON header
//!       | xi f64[] | sequential f64[] | tau u32[] | sha256 of all preceding bytes
//! ```
//!
//! Integers and floats are little endian. Tables are dense and row major
//! over `(i, k, age index)` with `k = 1..=i`; the header states which
//! tables are present. Solutions are stored for mean 1; queries at another
//! mean rescale time.
//!
//! A lattice directory holds `scv=<v>/omega=<w>/n=<n>.dsa` for every cell
//! and a `manifest.json` listing them. Problems with fewer clients are served
//! from the largest archive by shifting the client index.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::phasedp::{evaluate_policy_table, solve_phase_dp, Grid, PhaseDpSolution};
use crate::policies::{sequential_next, static_schedule, StaticSchedule};
use crate::probkernels::{fit_phase_type, PhaseTypeFit};
use crate::{CostWeights, WaitAccounting};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DSA\0";
const DIGEST_LEN: usize = 32;
pub const MANIFEST_FILE: &str = "manifest.json";

/// A solved cell: the dynamic solution plus what the baselines need to be
/// answered without solving.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleArchive {
    pub solution: PhaseDpSolution,
    /// Value of the sequential rule, laid out like `solution.xi`.
    pub sequential: Option<Vec<Vec<Vec<f64>>>>,
    /// Static schedules for `1..=n` clients, in that order. May be empty.
    pub statics: Vec<StaticSchedule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    mean: f64,
    scv: f64,
    fit: PhaseTypeFit,
    omega: f64,
    n: usize,
    grid: Grid,
    accounting: WaitAccounting,
    cost: f64,
    has_sequential: bool,
    statics: Vec<StaticSchedule>,
    layout: String,
}

fn table_len(n: usize, ages: usize) -> usize {
    n * (n + 1) / 2 * ages
}

fn tau_len(n: usize, ages: usize) -> usize {
    n.saturating_sub(1) * n / 2 * ages
}

impl ScheduleArchive {
    pub fn from_solution(solution: PhaseDpSolution) -> Self {
        Self { solution, sequential: None, statics: Vec::new() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.solution;
        let ages = s.grid.m_values.len();
        let header = Header {
            format_version: FORMAT_VERSION,
            mean: s.fit.source_mean,
            scv: s.fit.source_scv,
            fit: s.fit,
            omega: s.omega,
            n: s.n,
            grid: s.grid.clone(),
            accounting: s.accounting,
            cost: s.cost,
            has_sequential: self.sequential.is_some(),
            statics: self.statics.clone(),
            layout: "xi f64[i][k][age], sequential f64[i][k][age] if present, tau u32[i<n][k][age]; little endian".into(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 16 + 20 * table_len(s.n, ages));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let put_f64 = |t: &Vec<Vec<Vec<f64>>>, out: &mut Vec<u8>| -> Result<()> {
            check_shape(t, s.n, ages, "table")?;
            for x in t.iter().flatten().flatten() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            Ok(())
        };
        put_f64(&s.xi, &mut out)?;
        if let Some(seq) = &self.sequential {
            put_f64(seq, &mut out)?;
        }
        check_shape(&s.tau, s.n.saturating_sub(1), ages, "tau")?;
        for x in s.tau.iter().flatten().flatten() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 + DIGEST_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Integrity("not an archive".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version { found: version, expected: FORMAT_VERSION });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("checksum mismatch".into()));
        }
        let hlen = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        if 12 + hlen > body.len() {
            return Err(Error::Integrity("header length exceeds file".into()));
        }
        let h: Header = serde_json::from_slice(&body[12..12 + hlen])?;
        let ages = h.grid.m_values.len();
        let mut rest = &body[12 + hlen..];
        let want = 8 * table_len(h.n, ages) * (1 + h.has_sequential as usize) + 4 * tau_len(h.n, ages);
        if rest.len() != want {
            return Err(Error::Integrity(format!("payload is {} bytes, header implies {want}", rest.len())));
        }
        let mut take_f64 = || {
            let mut t = Vec::with_capacity(h.n);
            for i in 1..=h.n {
                let rows = (0..i)
                    .map(|_| {
                        let row = rest[..8 * ages].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                        rest = &rest[8 * ages..];
                        row
                    })
                    .collect();
                t.push(rows);
            }
            t
        };
        let xi = take_f64();
        let sequential = h.has_sequential.then(&mut take_f64);
        let mut tau = Vec::with_capacity(h.n);
        for i in 1..h.n {
            let rows = (0..i)
                .map(|_| {
                    let row = rest[..4 * ages].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
                    rest = &rest[4 * ages..];
                    row
                })
                .collect();
            tau.push(rows);
        }
        let refit = fit_phase_type(h.mean, h.scv)?;
        if !fits_close(&refit, &h.fit) {
            return Err(Error::Integrity("stored fit does not match its (mean, scv)".into()));
        }
        let solution = PhaseDpSolution {
            fit: h.fit,
            n: h.n,
            omega: h.omega,
            grid: h.grid,
            accounting: h.accounting,
            xi,
            tau,
            cost: h.cost,
        };
        Ok(Self { solution, sequential, statics: h.statics })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// `tau` and `xi` as CSV rows `i,k,age,tau,xi`, for inspection.
    pub fn to_csv(&self) -> String {
        let s = &self.solution;
        let mut out = String::from("i,k,age,tau,xi\n");
        for (i, stage) in s.xi.iter().enumerate() {
            for (k, row) in stage.iter().enumerate() {
                for (g, x) in row.iter().enumerate() {
                    let age = s.grid.m_values[g] as f64 * s.grid.delta;
                    let tau = s.tau.get(i).map(|t| format!("{}", t[k][g] as f64 * s.grid.delta)).unwrap_or_default();
                    out.push_str(&format!("{},{},{},{},{}\n", i + 1, k + 1, age, tau, x));
                }
            }
        }
        out
    }
}

fn check_shape<T>(t: &[Vec<Vec<T>>], stages: usize, ages: usize, what: &str) -> Result<()> {
    let ok = t.len() == stages && t.iter().enumerate().all(|(i, st)| st.len() == i + 1 && st.iter().all(|r| r.len() == ages));
    if ok {
        Ok(())
    } else {
        domain(format!("{what} has the wrong shape"))
    }
}

fn fits_close(a: &PhaseTypeFit, b: &PhaseTypeFit) -> bool {
    use serde_json::Value;
    fn close(x: &Value, y: &Value) -> bool {
        match (x, y) {
            (Value::Number(p), Value::Number(q)) => {
                let (p, q) = (p.as_f64().unwrap(), q.as_f64().unwrap());
                (p - q).abs() <= 1e-10 * p.abs().max(1.0)
            }
            (Value::Object(p), Value::Object(q)) => p.len() == q.len() && p.iter().all(|(k, v)| q.get(k).is_some_and(|w| close(v, w))),
            _ => x == y,
        }
    }
    close(&serde_json::to_value(a).unwrap(), &serde_json::to_value(b).unwrap())
}

/// Write a solution without baselines.
pub fn save(sol: &PhaseDpSolution) -> Result<Vec<u8>> {
    ScheduleArchive::from_solution(sol.clone()).to_bytes()
}

/// Read the dynamic solution back.
pub fn load(bytes: &[u8]) -> Result<PhaseDpSolution> {
    Ok(ScheduleArchive::from_bytes(bytes)?.solution)
}

/// Solve one cell at mean 1: dynamic DP, the sequential rule's values and
/// static schedules for every client count up to `n`.
pub fn build_archive(scv: f64, omega: f64, n: usize, grid: &Grid) -> Result<ScheduleArchive> {
    let fit = fit_phase_type(1.0, scv)?;
    let w = CostWeights::new(omega)?;
    let solution = solve_phase_dp(&fit, n, w, grid)?;
    let sequential = evaluate_policy_table(&fit, n, w, grid, |_, k, u| sequential_next(&fit, k, u, w).unwrap_or(0.0))?;
    let statics = (1..=n).map(|m| static_schedule(&fit, m, w)).collect::<Result<Vec<_>>>()?;
    Ok(ScheduleArchive { solution, sequential: Some(sequential), statics })
}

/// Parameter cells to precompute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub scvs: Vec<f64>,
    pub omegas: Vec<f64>,
    pub n: usize,
    pub grid: Grid,
}

impl Default for Lattice {
    /// SCV 0.2..2 by 0.05, omega 0.1..0.9 by 0.1, 20 clients, fine grid.
    fn default() -> Self {
        Self {
            scvs: (0..=36).map(|j| round2(0.2 + 0.05 * j as f64)).collect(),
            omegas: (1..=9).map(|j| round2(0.1 * j as f64)).collect(),
            n: 20,
            grid: Grid::fine(1.0),
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub scv: f64,
    pub omega: f64,
    /// Relative to the lattice directory.
    pub path: String,
    /// Optimal dynamic cost for `n` clients at mean 1.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n: usize,
    pub mean: f64,
    pub grid: Grid,
    pub scvs: Vec<f64>,
    pub omegas: Vec<f64>,
    pub cells: Vec<ManifestCell>,
}

pub fn cell_path(scv: f64, omega: f64, n: usize) -> String {
    format!("scv={scv:.2}/omega={omega:.1}/n={n}.dsa")
}

/// Solve and write every lattice cell under `dir`, at most `jobs` at a time.
/// `progress` is called after each cell is written.
pub fn precompute_lattice(
    dir: &Path,
    lattice: &Lattice,
    jobs: usize,
    progress: &(dyn Fn(&ManifestCell) + Sync),
) -> Result<Manifest> {
    if lattice.n == 0 || lattice.scvs.is_empty() || lattice.omegas.is_empty() {
        return domain("empty lattice");
    }
    std::fs::create_dir_all(dir)?;
    let cells: Vec<(f64, f64)> = lattice.scvs.iter().flat_map(|&s| lattice.omegas.iter().map(move |&o| (s, o))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let done: Vec<ManifestCell> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(scv, omega)| {
                let arc = build_archive(scv, omega, lattice.n, &lattice.grid)?;
                let path = cell_path(scv, omega, lattice.n);
                arc.save(&dir.join(&path))?;
                let cell = ManifestCell { scv, omega, path, cost: arc.solution.cost };
                progress(&cell);
                Ok(cell)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n: lattice.n,
        mean: 1.0,
        grid: lattice.grid.clone(),
        scvs: lattice.scvs.clone(),
        omegas: lattice.omegas.clone(),
        cells: done,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Arrival-epoch state of a scheduling problem, in the caller's time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateQuery {
    pub mean: f64,
    pub scv: f64,
    pub omega: f64,
    pub n: usize,
    pub i: usize,
    pub k: usize,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRef {
    pub scv: f64,
    pub omega: f64,
}

/// Dynamic-policy answer, in the caller's time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreAnswer {
    pub tau: f64,
    pub cost_to_go: f64,
    /// Optimal expected cost of the whole day.
    pub total_cost: f64,
    /// `u` lies beyond the stored ages; the last stored value was used.
    pub extrapolated: bool,
    pub cell: CellRef,
    /// The requested SCV is not on the lattice; the nearest cell answered.
    pub nearest_cell: bool,
    /// Grid step of the archive in the caller's time unit.
    pub delta: f64,
    /// Stage of the stored solution that answered.
    pub archive_stage: usize,
}

/// One baseline's answer for the same state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAnswer {
    pub policy: String,
    pub tau: f64,
    /// `None` for policies that cannot condition on the state.
    pub cost_to_go: Option<f64>,
    pub total_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cell: CellRef,
    pub nearest_cell: bool,
    pub extrapolated: bool,
    pub policies: Vec<PolicyAnswer>,
}

/// Read side of a lattice directory. Archives load lazily and are cached.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    manifest: Manifest,
    cache: RwLock<HashMap<usize, Arc<ScheduleArchive>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let mpath = root.join(MANIFEST_FILE);
        if !mpath.is_file() {
            return Err(Error::NotFound(format!("no {MANIFEST_FILE} in {}", root.display())));
        }
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(&mpath)?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Version { found: manifest.format_version, expected: FORMAT_VERSION });
        }
        Ok(Self { root, manifest, cache: RwLock::new(HashMap::new()) })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Load every archive now rather than on first use.
    pub fn preload(&self) -> Result<()> {
        (0..self.manifest.cells.len()).try_for_each(|j| self.archive(j).map(|_| ()))
    }

    /// Index of the cell for `omega` whose SCV is nearest to `scv`, and
    /// whether the match is exact.
    pub fn find_cell(&self, scv: f64, omega: f64) -> Result<(usize, bool)> {
        let best = self
            .manifest
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| (c.omega - omega).abs() < 1e-9)
            .min_by(|a, b| (a.1.scv - scv).abs().total_cmp(&(b.1.scv - scv).abs()).then(a.1.scv.total_cmp(&b.1.scv)));
        match best {
            Some((j, c)) => Ok((j, (c.scv - scv).abs() < 1e-9)),
            None => Err(Error::NotFound(format!("no archive for omega={omega}"))),
        }
    }

    pub fn archive(&self, j: usize) -> Result<Arc<ScheduleArchive>> {
        if let Some(a) = self.cache.read().unwrap().get(&j) {
            return Ok(a.clone());
        }
        let cell = self.manifest.cells.get(j).ok_or_else(|| Error::NotFound(format!("cell {j}")))?;
        let path = self.root.join(&cell.path);
        if !path.is_file() {
            return Err(Error::NotFound(format!("archive {} missing", path.display())));
        }
        let a = Arc::new(ScheduleArchive::load(&path)?);
        self.cache.write().unwrap().insert(j, a.clone());
        Ok(a)
    }

    fn locate(&self, q: &StateQuery) -> Result<(Arc<ScheduleArchive>, CellRef, bool, usize)> {
        if !(q.mean > 0.0 && q.mean.is_finite()) {
            return domain(format!("mean must be positive, got {}", q.mean));
        }
        if !(q.u >= 0.0 && q.u.is_finite()) {
            return domain(format!("u must be >= 0, got {}", q.u));
        }
        if q.n < 2 || q.i == 0 || q.i >= q.n || q.k == 0 || q.k > q.i {
            return domain(format!("need 1 <= k <= i < n; got n={}, i={}, k={}", q.n, q.i, q.k));
        }
        let (j, exact) = self.find_cell(q.scv, q.omega)?;
        let a = self.archive(j)?;
        if q.n > a.solution.n {
            return domain(format!("n={} exceeds the archived {} clients", q.n, a.solution.n));
        }
        let c = &self.manifest.cells[j];
        let shift = a.solution.n - q.n;
        Ok((a, CellRef { scv: c.scv, omega: c.omega }, exact, shift))
    }

    /// Optimal next gap and value at the queried state.
    pub fn query(&self, q: &StateQuery) -> Result<StoreAnswer> {
        let (a, cell, exact, shift) = self.locate(q)?;
        let s = &a.solution;
        let r = s.query_tau(q.i + shift, q.k, q.u / q.mean)?;
        Ok(StoreAnswer {
            tau: q.mean * r.tau,
            cost_to_go: q.mean * r.cost_to_go,
            total_cost: q.mean * s.xi[shift][0][0],
            extrapolated: r.extrapolated,
            cell,
            nearest_cell: !exact,
            delta: q.mean * s.grid.delta,
            archive_stage: q.i + shift,
        })
    }

    /// Dynamic, sequential and static answers for one state.
    pub fn compare(&self, q: &StateQuery) -> Result<Comparison> {
        let dynamic = self.query(q)?;
        let (a, cell, exact, shift) = self.locate(q)?;
        let s = &a.solution;
        let u = q.u / q.mean;
        let w = CostWeights::new(s.omega)?;
        let mut policies = vec![PolicyAnswer {
            policy: "dynamic-dp".into(),
            tau: dynamic.tau,
            cost_to_go: Some(dynamic.cost_to_go),
            total_cost: dynamic.total_cost,
            schedule: None,
        }];
        if let Some(seq) = &a.sequential {
            let stage = q.i + shift;
            policies.push(PolicyAnswer {
                policy: "sequential".into(),
                tau: q.mean * sequential_next(&s.fit, q.k, u, w)?,
                cost_to_go: Some(q.mean * s.grid.interp(&seq[stage - 1][q.k - 1], u / s.grid.delta)),
                total_cost: q.mean * seq[shift][0][0],
                schedule: None,
            });
        }
        if let Some(st) = a.statics.get(q.n - 1) {
            policies.push(PolicyAnswer {
                policy: "static".into(),
                tau: q.mean * st.gap(q.i),
                cost_to_go: None,
                total_cost: q.mean * st.cost,
                schedule: Some(st.times.iter().map(|t| q.mean * t).collect()),
            });
        }
        Ok(Comparison { cell, nearest_cell: !exact, extrapolated: dynamic.extrapolated, policies })
    }
}
