//! The networked Bernoulli MDP: single runs, coupled paired runs and
//! coupled-ensemble distances.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationModel;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::graph::{check_len, InterferenceGraph};
use crate::rng::{Purpose, Stream, StreamKey};

/// Per-unit treatment probabilities, each strictly inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyVector(Vec<f64>);

impl PolicyVector {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        for (unit, &value) in pi.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::PolicyOutOfRange { unit, value });
            }
        }
        Ok(Self(pi))
    }

    pub fn constant(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same policy with unit `i` set to `gamma`.
    pub fn with_unit(&self, i: usize, gamma: f64) -> Result<Self> {
        let mut pi = self.0.clone();
        pi[i] = gamma;
        Self::new(pi)
    }

    /// `π + Δ·v`.
    pub fn shifted(&self, delta: f64, v: &[f64]) -> Result<Self> {
        check_len(self.len(), v.len())?;
        Self::new(self.0.iter().zip(v).map(|(p, d)| p + delta * d).collect())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_f64s(&self.0)
    }
}

impl std::ops::Index<usize> for PolicyVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for PolicyVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PolicyVector> for Vec<f64> {
    fn from(p: PolicyVector) -> Self {
        p.0
    }
}

/// Initial state distribution. Random variants draw from the init stream:
/// unit `i` starts at 1 iff its uniform is below its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Bernoulli { p: f64 },
    Fixed { state: Vec<u8> },
    Product { p: Vec<f64> },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Bernoulli { p: 0.5 }
    }
}

impl InitSpec {
    fn draw(&self, n: usize, key: StreamKey) -> Result<Vec<u8>> {
        let probs: Vec<f64> = match self {
            InitSpec::Fixed { state } => {
                check_len(n, state.len())?;
                if let Some(&bad) = state.iter().find(|&&s| s > 1) {
                    return Err(Error::ConfigInvalid(format!("initial state entry {bad} is not binary")));
                }
                return Ok(state.clone());
            }
            InitSpec::Bernoulli { p } => vec![*p; n],
            InitSpec::Product { p } => {
                check_len(n, p.len())?;
                p.clone()
            }
        };
        if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidProbability(bad));
        }
        let mut u = vec![0.0; n];
        key.open().row(0, &mut u);
        Ok(u.iter().zip(&probs).map(|(u, p)| (u < p) as u8).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub replication: u64,
    pub burn_in: usize,
    pub policy: Vec<f64>,
    pub graph: Fingerprint,
    pub model: Fingerprint,
}

/// Recorded run over decision points `t = 0..horizon`. `Y` has `horizon + 1`
/// rows; `W` and `Z` have `horizon` rows with `Z[t] = neighbor_sums(Y[t])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    n: usize,
    horizon: usize,
    y: Vec<u8>,
    w: Vec<u8>,
    z: Vec<u32>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Outcomes at time `t ∈ 0..=horizon`.
    pub fn y(&self, t: usize) -> &[u8] {
        &self.y[t * self.n..(t + 1) * self.n]
    }

    /// Treatments at decision point `t ∈ 0..horizon`.
    pub fn w(&self, t: usize) -> &[u8] {
        &self.w[t * self.n..(t + 1) * self.n]
    }

    /// Neighbor sums at decision point `t ∈ 0..horizon`.
    pub fn z(&self, t: usize) -> &[u32] {
        &self.z[t * self.n..(t + 1) * self.n]
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut bytes = Vec::with_capacity(self.y.len() + self.w.len() + 64);
        bytes.extend_from_slice(&(self.n as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.horizon as u64).to_le_bytes());
        bytes.extend_from_slice(&self.y);
        bytes.extend_from_slice(&self.w);
        Fingerprint::combine(&[
            Fingerprint::of_bytes(&bytes),
            Fingerprint(self.meta.seed),
            Fingerprint(self.meta.replication),
            Fingerprint::of_f64s(&self.meta.policy),
            self.meta.graph,
            self.meta.model,
        ])
    }

    /// The first `horizon` decision points of this run.
    pub fn prefix(&self, horizon: usize) -> Result<Self> {
        if horizon > self.horizon {
            return Err(Error::TimeOutOfRange { t: horizon, horizon: self.horizon });
        }
        let n = self.n;
        Ok(Self {
            n,
            horizon,
            y: self.y[..(horizon + 1) * n].to_vec(),
            w: self.w[..horizon * n].to_vec(),
            z: self.z[..horizon * n].to_vec(),
            meta: self.meta.clone(),
        })
    }

    /// Checks shapes, binary entries and `Z[t] = neighbor_sums(Y[t])`.
    pub fn check_against(&self, g: &InterferenceGraph) -> Result<()> {
        check_len(g.n(), self.n)?;
        if self.meta.graph != g.fingerprint() {
            return Err(Error::ConfigInvalid(format!(
                "trajectory was recorded on graph {} but checked against {}",
                self.meta.graph,
                g.fingerprint()
            )));
        }
        let mut z = vec![0u32; self.n];
        for t in 0..self.horizon {
            g.neighbor_sums_into(self.y(t), &mut z)?;
            if z != self.z(t) {
                return Err(Error::ConfigInvalid(format!("stored neighbor sums disagree with Y at t = {t}")));
            }
        }
        Ok(())
    }

    fn from_parts(n: usize, horizon: usize, y: Vec<u8>, w: Vec<u8>, z: Vec<u32>, meta: TrajectoryMeta) -> Result<Self> {
        check_len((horizon + 1) * n, y.len())?;
        check_len(horizon * n, w.len())?;
        check_len(horizon * n, z.len())?;
        check_len(n, meta.policy.len())?;
        if y.iter().chain(&w).any(|&v| v > 1) {
            return Err(Error::Parse("outcomes and treatments must be binary".into()));
        }
        Ok(Self {
            n,
            horizon,
            y,
            w,
            z,
            meta,
        })
    }
}

/// One transition: unit `i` moves to 1 iff `draws[i] ≤ f_i(y_i, w_i, Z_i)`.
pub fn mdp_step(g: &InterferenceGraph, m: &ActivationModel, y: &[u8], w: &[u8], draws: &[f64]) -> Result<Vec<u8>> {
    let n = g.n();
    check_len(n, m.n())?;
    check_len(n, w.len())?;
    check_len(n, draws.len())?;
    let z = g.neighbor_sums(y)?;
    Ok((0..n)
        .map(|i| (draws[i] <= m.eval_f(i, y[i], w[i], z[i] as f64)) as u8)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub seed: u64,
    pub replication: u64,
    /// Steps simulated and discarded before recording starts.
    pub burn_in: usize,
    pub init: InitSpec,
}

impl SimOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            replication: 0,
            burn_in: 0,
            init: InitSpec::default(),
        }
    }

    pub fn replication(mut self, r: u64) -> Self {
        self.replication = r;
        self
    }

    pub fn burn_in(mut self, steps: usize) -> Self {
        self.burn_in = steps;
        self
    }

    pub fn init(mut self, init: InitSpec) -> Self {
        self.init = init;
        self
    }
}

/// Which random streams a coupled pair shares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub treatments: bool,
    pub outcomes: bool,
    pub init: bool,
}

impl Share {
    pub fn all() -> Self {
        Self {
            treatments: true,
            outcomes: true,
            init: true,
        }
    }

    pub fn none() -> Self {
        Self {
            treatments: false,
            outcomes: false,
            init: false,
        }
    }
}

struct Chain<'a> {
    g: &'a InterferenceGraph,
    m: &'a ActivationModel,
    pi: &'a [f64],
    treat: Stream,
    outcome: Stream,
    y: Vec<u8>,
    w: Vec<u8>,
    z: Vec<u32>,
    u: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(
        g: &'a InterferenceGraph,
        m: &'a ActivationModel,
        pi: &'a PolicyVector,
        keys: [StreamKey; 3],
        init: &InitSpec,
    ) -> Result<Self> {
        let n = g.n();
        check_len(n, m.n())?;
        check_len(n, pi.len())?;
        let [treat, outcome, init_key] = keys;
        let y = init.draw(n, init_key)?;
        let mut z = vec![0; n];
        g.neighbor_sums_into(&y, &mut z)?;
        Ok(Self {
            g,
            m,
            pi: pi.as_slice(),
            treat: treat.open(),
            outcome: outcome.open(),
            y,
            w: vec![0; n],
            z,
            u: vec![0.0; n],
        })
    }

    /// Draws `W_t` and then `Y_{t+1}`; afterwards `w` holds `W_t` and `y`, `z`
    /// describe time `t + 1`.
    fn step(&mut self, t: u64) {
        self.treat.row(t, &mut self.u);
        for ((w, &u), &p) in self.w.iter_mut().zip(&self.u).zip(self.pi) {
            *w = (u <= p) as u8;
        }
        self.outcome.row(t, &mut self.u);
        for i in 0..self.y.len() {
            let f = self.m.eval_f(i, self.y[i], self.w[i], self.z[i] as f64);
            self.y[i] = (self.u[i] <= f) as u8;
        }
        self.g
            .neighbor_sums_into(&self.y, &mut self.z)
            .expect("lengths checked at construction");
    }
}

struct Recorder {
    y: Vec<u8>,
    w: Vec<u8>,
    z: Vec<u32>,
}

impl Recorder {
    fn new(n: usize, horizon: usize) -> Self {
        Self {
            y: Vec::with_capacity((horizon + 1) * n),
            w: Vec::with_capacity(horizon * n),
            z: Vec::with_capacity(horizon * n),
        }
    }

    fn run(mut self, chain: &mut Chain, start: u64, horizon: usize) -> Self {
        self.y.extend_from_slice(&chain.y);
        for t in 0..horizon as u64 {
            self.z.extend_from_slice(&chain.z);
            chain.step(start + t);
            self.w.extend_from_slice(&chain.w);
            self.y.extend_from_slice(&chain.y);
        }
        self
    }
}

fn meta(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, seed: u64, replication: u64, burn_in: usize) -> TrajectoryMeta {
    TrajectoryMeta {
        seed,
        replication,
        burn_in,
        policy: pi.as_slice().to_vec(),
        graph: g.fingerprint(),
        model: m.fingerprint(),
    }
}

/// Simulates `horizon` decision points under policy `pi`. Fully determined by
/// `(opts.seed, opts.replication)` and the configuration.
pub fn simulate(
    g: &InterferenceGraph,
    m: &ActivationModel,
    pi: &PolicyVector,
    horizon: usize,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let key = |p| StreamKey::new(opts.seed, opts.replication, p);
    let mut chain = Chain::new(g, m, pi, [key(Purpose::Treatment), key(Purpose::Outcome), key(Purpose::Init)], &opts.init)?;
    for t in 0..opts.burn_in as u64 {
        chain.step(t);
    }
    let rec = Recorder::new(g.n(), horizon).run(&mut chain, opts.burn_in as u64, horizon);
    Trajectory::from_parts(
        g.n(),
        horizon,
        rec.y,
        rec.w,
        rec.z,
        meta(g, m, pi, opts.seed, opts.replication, opts.burn_in),
    )
}

/// Runs replications `reps` concurrently; the output is ordered by
/// replication and independent of scheduling.
pub fn simulate_replications(
    g: &InterferenceGraph,
    m: &ActivationModel,
    pi: &PolicyVector,
    horizon: usize,
    base: &SimOptions,
    reps: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    reps.into_par_iter()
        .map(|r| simulate(g, m, pi, horizon, &base.clone().replication(r)))
        .collect()
}

/// Two chains on common random numbers. Chain A always uses lane 0; chain B
/// uses lane 0 for shared streams and lane 1 otherwise, so shared streams
/// give identical uniforms for every `(t, i)`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_simulate(
    g: &InterferenceGraph,
    m: &ActivationModel,
    pi_a: &PolicyVector,
    pi_b: &PolicyVector,
    horizon: usize,
    seed: u64,
    replication: u64,
    init_a: &InitSpec,
    init_b: &InitSpec,
    share: Share,
) -> Result<(Trajectory, Trajectory)> {
    let key = |p| StreamKey::new(seed, replication, p);
    let lane = |shared: bool, p| key(p).with_lane(if shared { 0 } else { 1 });
    let keys_a = [key(Purpose::Treatment), key(Purpose::Outcome), key(Purpose::Init)];
    let keys_b = [
        lane(share.treatments, Purpose::Treatment),
        lane(share.outcomes, Purpose::Outcome),
        lane(share.init, Purpose::Init),
    ];
    let mut a = Chain::new(g, m, pi_a, keys_a, init_a)?;
    let mut b = Chain::new(g, m, pi_b, keys_b, init_b)?;
    let ra = Recorder::new(g.n(), horizon).run(&mut a, 0, horizon);
    let rb = Recorder::new(g.n(), horizon).run(&mut b, 0, horizon);
    Ok((
        Trajectory::from_parts(g.n(), horizon, ra.y, ra.w, ra.z, meta(g, m, pi_a, seed, replication, 0))?,
        Trajectory::from_parts(g.n(), horizon, rb.y, rb.w, rb.z, meta(g, m, pi_b, seed, replication, 0))?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `‖X_t − Y_t‖₁`
    L1,
    /// Graph distance `d_{E,k}`.
    Neighborhood(u32),
}

/// `‖X_t − Y_t‖₁` for one pair.
pub fn pair_l1(a: &Trajectory, b: &Trajectory, t: usize) -> f64 {
    a.y(t).iter().zip(b.y(t)).filter(|(x, y)| x != y).count() as f64
}

/// Coupled-ensemble estimate of a distance between the laws of `X_t` and
/// `Y_t`. For `L1` this is the ensemble mean of `‖X_t − Y_t‖₁`; for
/// `Neighborhood(k)` it is `max_i (mean (Σ_{j∈N(i)} |X_jt − Y_jt|)^k)^{1/k}`.
/// Either is an upper bound proxy for the corresponding Wasserstein distance.
pub fn empirical_distance(g: &InterferenceGraph, pairs: &[(Trajectory, Trajectory)], t: usize, metric: Metric) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let reps = pairs.len() as f64;
    for (a, b) in pairs {
        check_len(g.n(), a.n())?;
        check_len(g.n(), b.n())?;
        for h in [a.horizon(), b.horizon()] {
            if t > h {
                return Err(Error::TimeOutOfRange { t, horizon: h });
            }
        }
    }
    match metric {
        Metric::L1 => Ok(pairs.iter().map(|(a, b)| pair_l1(a, b, t)).sum::<f64>() / reps),
        Metric::Neighborhood(k) => {
            let k = k.max(1) as i32;
            let mut moments = vec![0.0f64; g.n()];
            let mut diff = vec![0u8; g.n()];
            let mut counts = vec![0u32; g.n()];
            for (a, b) in pairs {
                for ((d, x), y) in diff.iter_mut().zip(a.y(t)).zip(b.y(t)) {
                    *d = (x != y) as u8;
                }
                g.neighbor_sums_into(&diff, &mut counts)?;
                for (m, &c) in moments.iter_mut().zip(&counts) {
                    *m += (c as f64).powi(k);
                }
            }
            Ok(moments
                .iter()
                .map(|m| (m / reps).powf(1.0 / k as f64))
                .fold(0.0, f64::max))
        }
    }
}

const CSV_MAGIC: &str = "# netmrt trajectory v1";
const BIN_MAGIC: &[u8; 8] = b"NMRTTRJ1";

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl Trajectory {
    /// Long-format CSV: comment header, then `t,i,y,w,z` rows for
    /// `t = 0..=horizon`; `w` and `z` are empty on the final row block.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{CSV_MAGIC}")?;
        writeln!(
            out,
            "# n={} horizon={} seed={} replication={} burn_in={}",
            self.n, self.horizon, self.meta.seed, self.meta.replication, self.meta.burn_in
        )?;
        writeln!(
            out,
            "# graph={} model={} policy_hash={}",
            self.meta.graph,
            self.meta.model,
            Fingerprint::of_f64s(&self.meta.policy)
        )?;
        writeln!(out, "# policy={}", join_f64(&self.meta.policy))?;
        writeln!(out, "t,i,y,w,z")?;
        for t in 0..=self.horizon {
            for i in 0..self.n {
                if t < self.horizon {
                    writeln!(out, "{t},{i},{},{},{}", self.y(t)[i], self.w(t)[i], self.z(t)[i])?;
                } else {
                    writeln!(out, "{t},{i},{},,", self.y(t)[i])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("trajectory CSV truncated".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != CSV_MAGIC {
            return Err(Error::Parse("missing trajectory CSV header".into()));
        }
        let mut fields = std::collections::HashMap::new();
        for _ in 0..3 {
            let line = next()?;
            let body = line
                .strip_prefix('#')
                .ok_or_else(|| Error::Parse(format!("expected header comment, got {line:?}")))?;
            for kv in body.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    fields.insert(k.to_string(), v.to_string());
                }
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| Error::Parse(format!("header field `{k}` missing")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad `{k}`"))) };
        let fp = |k: &str| -> Result<Fingerprint> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad `{k}`"))) };
        let (n, horizon) = (num("n")? as usize, num("horizon")? as usize);
        let policy: Vec<f64> = get("policy")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad policy entry {s:?}"))))
            .collect::<Result<_>>()?;
        let meta = TrajectoryMeta {
            seed: num("seed")?,
            replication: num("replication")?,
            burn_in: num("burn_in")? as usize,
            policy,
            graph: fp("graph")?,
            model: fp("model")?,
        };
        if next()?.trim() != "t,i,y,w,z" {
            return Err(Error::Parse("missing column header".into()));
        }
        let mut y = vec![0u8; (horizon + 1) * n];
        let mut w = vec![0u8; horizon * n];
        let mut z = vec![0u32; horizon * n];
        for _ in 0..(horizon + 1) * n {
            let line = next()?;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Parse(format!("expected 5 columns in {line:?}")));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad field in {line:?}")));
            let (t, i) = (idx(cols[0])?, idx(cols[1])?);
            if t > horizon || i >= n {
                return Err(Error::Parse(format!("row out of range: {line:?}")));
            }
            y[t * n + i] = idx(cols[2])? as u8;
            if t < horizon {
                w[t * n + i] = idx(cols[3])? as u8;
                z[t * n + i] = idx(cols[4])? as u32;
            }
        }
        Self::from_parts(n, horizon, y, w, z, meta)
    }

    /// Fixed-width little-endian dump: magic `NMRTTRJ1`; u64 n, horizon,
    /// seed, replication, burn_in, graph hash, model hash; n × f64 policy;
    /// (horizon+1)·n u8 outcomes; horizon·n u8 treatments; horizon·n u32
    /// neighbor sums. Row-major in time.
    pub fn write_binary(&self, out: impl Write) -> Result<()> {
        let mut out = BufWriter::new(out);
        out.write_all(BIN_MAGIC)?;
        for v in [
            self.n as u64,
            self.horizon as u64,
            self.meta.seed,
            self.meta.replication,
            self.meta.burn_in as u64,
            self.meta.graph.0,
            self.meta.model.0,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for p in &self.meta.policy {
            out.write_all(&p.to_le_bytes())?;
        }
        out.write_all(&self.y)?;
        out.write_all(&self.w)?;
        for z in &self.z {
            out.write_all(&z.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary(input: impl Read) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != BIN_MAGIC {
            return Err(Error::Parse("not a binary trajectory dump".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 7];
        for h in header.iter_mut() {
            input.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [n, horizon, seed, replication, burn_in, graph, model] = header;
        let (n, horizon) = (n as usize, horizon as usize);
        let mut policy = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut word)?;
            policy.push(f64::from_le_bytes(word));
        }
        let mut y = vec![0u8; (horizon + 1) * n];
        input.read_exact(&mut y)?;
        let mut w = vec![0u8; horizon * n];
        input.read_exact(&mut w)?;
        let mut raw = vec![0u8; 4 * horizon * n];
        input.read_exact(&mut raw)?;
        let z = raw.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let meta = TrajectoryMeta {
            seed,
            replication,
            burn_in: burn_in as usize,
            policy,
            graph: Fingerprint(graph),
            model: Fingerprint(model),
        };
        Self::from_parts(n, horizon, y, w, z, meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }

    /// Loads a dump written by [`Trajectory::save`]; the format is detected
    /// from the leading magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(BIN_MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            Self::read_csv(&bytes[..])
        }
    }
}
