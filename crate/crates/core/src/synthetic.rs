//! Synthetic Pauli-measurement data: the W state, Pauli strings and their
//! outcome projectors, Born-rule shot sampling and the JSON dataset format.
//!
//! Conventions:
//! - Basis index bits are little-endian: qubit `k` is bit `k` of the index.
//! - A Pauli string is written most-significant qubit first, so letter `i`
//!   of a `q`-letter string acts on qubit `q - 1 - i` and
//!   `pauli_matrix("AB") = A (x) B`.
//! - Sampling uses one `ChaCha8Rng` stream seeded with the dataset seed. Each
//!   shot draws, in order, a Pauli (`gen_range(0..4^q - 1)`, skipped entirely
//!   in exhaustive mode) and then a uniform `f64` in `[0, 1)`; the outcome is
//!   `+1` when that draw is below `tr(A_+ rho)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{check_same_dim, trace_product, HermitianMatrix};
use crate::model::{DensityMatrix, MeasurementOperator, ShotDataset};

pub const DATASET_VERSION: u64 = 1;

/// Largest register the generator accepts (`4^q` must fit comfortably in u64
/// and the dense `2^q x 2^q` operators in memory).
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    const ALL: [PauliLetter; 4] = [
        PauliLetter::I,
        PauliLetter::X,
        PauliLetter::Y,
        PauliLetter::Z,
    ];

    fn matrix(self) -> [[Complex64; 2]; 2] {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            PauliLetter::I => [[l, o], [o, l]],
            PauliLetter::X => [[o, l], [l, o]],
            PauliLetter::Y => [[o, -i], [i, o]],
            PauliLetter::Z => [[l, o], [o, -l]],
        }
    }

    fn as_char(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    letters: Vec<PauliLetter>,
}

impl PauliString {
    pub fn new(letters: Vec<PauliLetter>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::invalid("Pauli string must have at least one letter"));
        }
        Ok(Self { letters })
    }

    /// The `index`-th string of length `q` in base-4 order `I < X < Y < Z`,
    /// first letter most significant. Index 0 is the all-I string.
    pub fn from_index(q: usize, mut index: u64) -> Self {
        let mut letters = vec![PauliLetter::I; q];
        for slot in letters.iter_mut().rev() {
            *slot = PauliLetter::ALL[(index % 4) as usize];
            index /= 4;
        }
        Self { letters }
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&l| l == PauliLetter::I)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c {
                'I' => Ok(PauliLetter::I),
                'X' => Ok(PauliLetter::X),
                'Y' => Ok(PauliLetter::Y),
                'Z' => Ok(PauliLetter::Z),
                other => Err(Error::invalid(format!(
                    "invalid Pauli letter {other:?} in {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }
}

/// Kronecker product of the single-qubit Pauli matrices in letter order.
pub fn pauli_matrix(p: &PauliString) -> HermitianMatrix {
    let mut acc = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for letter in &p.letters {
        let m = letter.matrix();
        let small = DMatrix::from_fn(2, 2, |r, c| m[r][c]);
        acc = acc.kronecker(&small);
    }
    HermitianMatrix::new(acc).expect("Kronecker product of square matrices is square")
}

/// Projectors `(I + P)/2` and `(I - P)/2` onto the `+1` and `-1` eigenspaces.
pub fn outcome_operators(p: &PauliString) -> Result<(MeasurementOperator, MeasurementOperator)> {
    if p.is_identity() {
        return Err(Error::invalid(
            "the all-I Pauli string has a deterministic outcome",
        ));
    }
    let pm = pauli_matrix(p);
    let id = HermitianMatrix::identity(pm.dim());
    let plus = id.add_scaled(&pm, 1.0)?.scale(0.5);
    let minus = id.add_scaled(&pm, -1.0)?.scale(0.5);
    Ok((
        MeasurementOperator::from_trusted(plus),
        MeasurementOperator::from_trusted(minus),
    ))
}

/// Outcome projector for a single `(pauli, +-1)` record.
pub fn outcome_operator(p: &PauliString, outcome: Outcome) -> Result<MeasurementOperator> {
    let (plus, minus) = outcome_operators(p)?;
    Ok(match outcome {
        Outcome::Plus => plus,
        Outcome::Minus => minus,
    })
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if amplitudes.is_empty() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("state vector has norm {norm}")));
        }
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::pure(&self.amplitudes).expect("unit vector")
    }
}

/// `|W_q> = (1/sqrt q) sum_k |2^k>`.
pub fn w_state(q: usize) -> Result<PureState> {
    if q == 0 {
        return Err(Error::invalid("W state needs at least one qubit"));
    }
    if q > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "at most {MAX_QUBITS} qubits are supported"
        )));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << q];
    let a = 1.0 / (q as f64).sqrt();
    for k in 0..q {
        amps[1 << k] = Complex64::new(a, 0.0);
    }
    PureState::new(amps)
}

/// `tr(A rho)` clamped to `[0, 1]`.
pub fn born_probability(a: &MeasurementOperator, rho: &DensityMatrix) -> Result<f64> {
    check_same_dim(a.dim(), rho.dim())?;
    let p = trace_product(a.matrix(), rho.matrix())?;
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::ModelViolation(format!(
            "outcome probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Result<Self> {
        match sign {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::invalid(format!(
                "outcome must be +1 or -1, got {other}"
            ))),
        }
    }
}

/// A `(pauli, outcome)` pair observed `count` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotRecord {
    pub pauli: PauliString,
    pub outcome: Outcome,
    pub count: u64,
}

/// How Pauli settings are assigned to shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliSchedule {
    /// Each shot picks one of the `4^q - 1` non-identity strings uniformly.
    #[default]
    Uniform,
    /// Shot `s` uses non-identity string number `s mod (4^q - 1)`.
    Exhaustive,
}

/// Known true states a dataset can be generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrueState {
    W,
}

impl TrueState {
    pub fn pure_state(self, q: usize) -> Result<PureState> {
        match self {
            TrueState::W => w_state(q),
        }
    }
}

/// Shot records plus the metadata needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub qubits: usize,
    pub seed: u64,
    pub state: Option<TrueState>,
    pub records: Vec<ShotRecord>,
}

impl DatasetFile {
    pub fn total_shots(&self) -> u64 {
        self.records.iter().map(|r| r.count).sum()
    }

    /// Rebuilds the measurement operators from the Pauli strings, one dataset
    /// entry per record, in record order.
    pub fn to_dataset(&self) -> Result<ShotDataset> {
        let d = 1usize << self.qubits;
        let mut cache: HashMap<&PauliString, (MeasurementOperator, MeasurementOperator)> =
            HashMap::new();
        let mut entries = Vec::with_capacity(self.records.len());
        for r in &self.records {
            if !cache.contains_key(&r.pauli) {
                cache.insert(&r.pauli, outcome_operators(&r.pauli)?);
            }
            let (plus, minus) = &cache[&r.pauli];
            let op = match r.outcome {
                Outcome::Plus => plus.clone(),
                Outcome::Minus => minus.clone(),
            };
            entries.push((op, r.count));
        }
        ShotDataset::new(d, entries)
    }

    pub fn true_state(&self) -> Result<Option<PureState>> {
        self.state.map(|s| s.pure_state(self.qubits)).transpose()
    }
}

/// Draws `num_shots` Pauli measurements of `rho_true` and aggregates them into
/// records sorted by `(pauli, outcome)`.
pub fn sample_shots(
    rho_true: &DensityMatrix,
    num_shots: u64,
    seed: u64,
    schedule: PauliSchedule,
) -> Result<Vec<ShotRecord>> {
    let d = rho_true.dim();
    if !d.is_power_of_two() || d < 2 {
        return Err(Error::invalid(format!(
            "dimension {d} is not a qubit register"
        )));
    }
    let q = d.trailing_zeros() as usize;
    if q > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "at most {MAX_QUBITS} qubits are supported"
        )));
    }
    if num_shots == 0 {
        return Err(Error::invalid("num_shots must be at least 1"));
    }
    let settings = 4u64.pow(q as u32) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plus_prob: HashMap<u64, f64> = HashMap::new();
    let mut counts: BTreeMap<(u64, Outcome), u64> = BTreeMap::new();

    for s in 0..num_shots {
        let index = match schedule {
            PauliSchedule::Uniform => rng.gen_range(0..settings) + 1,
            PauliSchedule::Exhaustive => s % settings + 1,
        };
        let p = match plus_prob.get(&index) {
            Some(&p) => p,
            None => {
                let (plus, _) = outcome_operators(&PauliString::from_index(q, index))?;
                let p = born_probability(&plus, rho_true)?;
                plus_prob.insert(index, p);
                p
            }
        };
        let u: f64 = rng.gen();
        let outcome = if u < p { Outcome::Plus } else { Outcome::Minus };
        *counts.entry((index, outcome)).or_insert(0) += 1;
    }

    Ok(counts
        .into_iter()
        .map(|((index, outcome), count)| ShotRecord {
            pauli: PauliString::from_index(q, index),
            outcome,
            count,
        })
        .collect())
}

/// Generates a dataset from one of the known true states.
pub fn generate(
    qubits: usize,
    num_shots: u64,
    seed: u64,
    state: TrueState,
    schedule: PauliSchedule,
) -> Result<DatasetFile> {
    let psi = state.pure_state(qubits)?;
    let records = sample_shots(&psi.density_matrix(), num_shots, seed, schedule)?;
    Ok(DatasetFile {
        qubits,
        seed,
        state: Some(state),
        records,
    })
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    pauli: String,
    outcome: i64,
    count: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetJson {
    version: u64,
    q: usize,
    seed: u64,
    state: Option<TrueState>,
    shots: Vec<RecordJson>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Writes the versioned JSON form of `file`.
pub fn write_dataset<W: Write>(file: &DatasetFile, mut out: W) -> Result<()> {
    let json = DatasetJson {
        version: DATASET_VERSION,
        q: file.qubits,
        seed: file.seed,
        state: file.state,
        shots: file
            .records
            .iter()
            .map(|r| RecordJson {
                pauli: r.pauli.to_string(),
                outcome: r.outcome.sign() as i64,
                count: r.count,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut out, &json).map_err(|e| match e.io_error_kind() {
        Some(kind) => Error::Io(std::io::Error::new(kind, e.to_string())),
        None => json_error(e),
    })?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Parses a dataset file. Records are validated against `q` but operators are
/// not built until [`DatasetFile::to_dataset`].
pub fn read_dataset<R: Read>(mut input: R) -> Result<DatasetFile> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let probe: VersionProbe = serde_json::from_str(&text).map_err(json_error)?;
    if probe.version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            found: probe.version,
            expected: DATASET_VERSION,
        });
    }
    let json: DatasetJson = serde_json::from_str(&text).map_err(json_error)?;
    if json.q == 0 || json.q > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "q = {} outside 1..={MAX_QUBITS}",
            json.q
        )));
    }
    let records = json
        .shots
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let pauli: PauliString = r.pauli.parse()?;
            if pauli.num_qubits() != json.q {
                return Err(Error::invalid(format!(
                    "shot record {i}: Pauli {pauli} has {} letters, expected {}",
                    pauli.num_qubits(),
                    json.q
                )));
            }
            if pauli.is_identity() {
                return Err(Error::invalid(format!("shot record {i}: identity Pauli")));
            }
            if r.count == 0 {
                return Err(Error::invalid(format!(
                    "shot record {i}: count must be positive"
                )));
            }
            Ok(ShotRecord {
                pauli,
                outcome: Outcome::from_sign(r.outcome)?,
                count: r.count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetFile {
        qubits: json.q,
        seed: json.seed,
        state: json.state,
        records,
    })
}
