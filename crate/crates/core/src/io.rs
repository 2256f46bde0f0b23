//! File formats: roll-call CSV, legislator metadata sidecar, fit documents,
//! TOML configs and run manifests.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::identification::AnchorSpec;
use crate::model::{
    BillMeta, FitResult, Hyperparams, LegislatorMeta, ModelState, Party, Penalty, ShiftMatrix, Vote, VoteMatrix,
    DEFAULT_EPSILON, DEFAULT_LAMBDA, DEFAULT_MAX_ITER, DEFAULT_PRELIMINARY_LAMBDA,
};
use crate::preprocess::PreprocessConfig;
use crate::simulate::{SimulationSpec, SyntheticTruth};

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        csv::ErrorKind::Utf8 { err, .. } => Error::Parse {
            line,
            message: format!("invalid UTF-8: {err}"),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_vote(token: &str) -> Option<Vote> {
    match token {
        "1" => Some(Vote::Yea),
        "0" => Some(Vote::Nay),
        "NA" | "" => Some(Vote::Missing),
        _ => None,
    }
}

fn vote_token(vote: Vote) -> &'static str {
    match vote {
        Vote::Yea => "1",
        Vote::Nay => "0",
        Vote::Missing => "NA",
    }
}

/// Parses a roll-call table. The header row holds bill ids after a leading
/// label cell; each following row is a legislator id and one cell per bill.
pub fn parse_rollcall<R: Read>(reader: R, source: &Path) -> Result<VoteMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(source, e))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header row".into(),
            })
        }
    };
    let header_line = header.position().map_or(1, |p| p.line() as usize);
    let bills: Vec<BillMeta> = header.iter().skip(1).map(BillMeta::new).collect();
    if let Some(k) = bills.iter().position(|b| b.id.is_empty()) {
        return Err(Error::Parse {
            line: header_line,
            message: format!("empty bill id in column {}", k + 2),
        });
    }
    let width = header.len();
    let mut legislators = Vec::new();
    let mut votes = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty legislator id".into(),
            });
        }
        for (k, token) in record.iter().skip(1).enumerate() {
            let vote = parse_vote(token).ok_or_else(|| Error::Parse {
                line,
                message: format!(
                    "unknown vote token '{token}' at legislator '{id}', bill '{}'",
                    bills[k].id
                ),
            })?;
            votes.push(vote);
        }
        legislators.push(LegislatorMeta::new(id));
    }
    VoteMatrix::new(votes, legislators, bills)
}

pub fn read_rollcall_csv(path: impl AsRef<Path>) -> Result<VoteMatrix> {
    let path = path.as_ref();
    parse_rollcall(open(path)?, path)
}

pub fn write_rollcall<W: Write>(data: &VoteMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let header = std::iter::once("legislator").chain(data.bills().iter().map(|b| b.id.as_str()));
    wtr.write_record(header).map_err(|e| csv_error(Path::new("<output>"), e))?;
    for (i, leg) in data.legislators().iter().enumerate() {
        let row = std::iter::once(leg.id.as_str()).chain(data.row(i).iter().map(|&v| vote_token(v)));
        wtr.write_record(row).map_err(|e| csv_error(Path::new("<output>"), e))?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_rollcall_csv(data: &VoteMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    write_rollcall(data, &mut out).map_err(|e| retarget(e, path))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn retarget(err: Error, path: &Path) -> Error {
    match err {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct MetaRecord {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    party: String,
    #[serde(default)]
    district: String,
}

/// Reads an `id,name,party,district` sidecar; only `id` is required.
pub fn read_metadata_csv(path: impl AsRef<Path>) -> Result<Vec<LegislatorMeta>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut out: Vec<LegislatorMeta> = Vec::new();
    for record in rdr.deserialize::<MetaRecord>() {
        let r = record.map_err(|e| csv_error(path, e))?;
        if out.iter().any(|m| m.id == r.id) {
            return Err(Error::Data(format!("{}: duplicate legislator id '{}'", path.display(), r.id)));
        }
        out.push(LegislatorMeta {
            name: if r.name.is_empty() { r.id.clone() } else { r.name },
            party: if r.party.is_empty() { None } else { Some(r.party.parse()?) },
            district: (!r.district.is_empty()).then_some(r.district),
            id: r.id,
        });
    }
    Ok(out)
}

pub fn write_metadata_csv(legislators: &[LegislatorMeta], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_writer(create(path)?);
    for l in legislators {
        wtr.serialize(MetaRecord {
            id: l.id.clone(),
            name: l.name.clone(),
            party: l.party.map(|p| p.to_string()).unwrap_or_default(),
            district: l.district.clone().unwrap_or_default(),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Attaches sidecar metadata by id. Rows without an entry keep their defaults;
/// sidecar ids absent from the matrix are ignored.
pub fn apply_metadata(data: &mut VoteMatrix, meta: &[LegislatorMeta]) -> usize {
    let mut matched = 0;
    for leg in data.legislators_mut() {
        if let Some(m) = meta.iter().find(|m| m.id == leg.id) {
            *leg = m.clone();
            matched += 1;
        }
    }
    if matched < meta.len() {
        log::warn!("{} metadata rows match no legislator", meta.len() - matched);
    }
    matched
}

/// Metadata for `ids`, in that order, taken from `meta` where present.
pub fn metadata_for(ids: &[String], meta: &[LegislatorMeta]) -> Vec<LegislatorMeta> {
    ids.iter()
        .map(|id| meta.iter().find(|m| &m.id == id).cloned().unwrap_or_else(|| LegislatorMeta::new(id)))
        .collect()
}

/// Writes every float with 17 significant digits so values survive a round trip.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with exact floats and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::with_indent(b"  ")));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Format(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json_string(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

/// `+∞` is written as `null`; `null` and the strings `"inf"`/`"infinity"` read back as `+∞`.
pub mod lambda_format {
    use super::*;

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if value.is_infinite() && *value > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*value)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(f64::INFINITY),
            Some(Raw::Number(x)) => Ok(x),
            Some(Raw::Text(t)) => match t.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                _ => Err(serde::de::Error::custom(format!("invalid lambda '{t}'"))),
            },
        }
    }
}

fn check_schema(version: &str, what: &str) -> Result<()> {
    let major = version.split('.').next().unwrap_or("");
    if major != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported {what} schema version '{version}' (this build reads version {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub legislators: usize,
    pub bills: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// On-disk form of a fit. θ and β are row-major `rows × dim` arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub schema_version: String,
    pub dims: Dims,
    pub penalty: Penalty,
    #[serde(with = "lambda_format")]
    pub lambda: f64,
    pub legislators: Vec<String>,
    pub bills: Vec<String>,
    pub theta: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<GammaEntry>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitDocument {
    pub fn from_fit(fit: &FitResult, hp: &Hyperparams, legislators: &[String], bills: &[String]) -> Result<Self> {
        let s = &fit.state;
        s.validate()?;
        if legislators.len() != s.n_legislators() || bills.len() != s.n_bills() {
            return Err(Error::Contract("ids do not match the fitted dimensions".into()));
        }
        Ok(FitDocument {
            schema_version: SCHEMA_VERSION.into(),
            dims: Dims {
                legislators: s.n_legislators(),
                bills: s.n_bills(),
                dim: s.dim,
            },
            penalty: hp.penalty,
            lambda: hp.lambda,
            legislators: legislators.to_vec(),
            bills: bills.to_vec(),
            theta: s.theta.chunks(s.dim).map(<[f64]>::to_vec).collect(),
            alpha: s.alpha.clone(),
            beta: s.beta.chunks(s.dim).map(<[f64]>::to_vec).collect(),
            gamma: s.gamma.iter().map(|(i, j, value)| GammaEntry { i, j, value }).collect(),
            objective_trace: fit.objective_trace.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
        })
    }

    /// Rebuilds the fit after checking the schema version and shapes.
    pub fn to_fit(&self) -> Result<FitResult> {
        check_schema(&self.schema_version, "fit")?;
        let Dims { legislators, bills, dim } = self.dims;
        let rows_ok = |rows: &[Vec<f64>], n: usize| rows.len() == n && rows.iter().all(|r| r.len() == dim);
        if !rows_ok(&self.theta, legislators)
            || !rows_ok(&self.beta, bills)
            || self.alpha.len() != bills
            || self.legislators.len() != legislators
            || self.bills.len() != bills
        {
            return Err(Error::Format("fit document arrays do not match its dims".into()));
        }
        let mut gamma = ShiftMatrix::new();
        for g in &self.gamma {
            if g.i >= legislators || g.j >= bills {
                return Err(Error::Format(format!("gamma entry ({}, {}) out of range", g.i, g.j)));
            }
            gamma.set(g.i, g.j, g.value);
        }
        let state = ModelState {
            dim,
            theta: self.theta.concat(),
            alpha: self.alpha.clone(),
            beta: self.beta.concat(),
            gamma,
        };
        state.validate()?;
        Ok(FitResult::new(state, self.objective_trace.clone(), self.iterations, self.converged))
    }

    /// An all-missing matrix carrying this fit's ids, for reports without vote data.
    pub fn empty_votes(&self) -> Result<VoteMatrix> {
        VoteMatrix::new(
            vec![Vote::Missing; self.legislators.len() * self.bills.len()],
            self.legislators.iter().map(LegislatorMeta::new).collect(),
            self.bills.iter().map(BillMeta::new).collect(),
        )
    }
}

pub fn write_fit_json(doc: &FitDocument, path: impl AsRef<Path>) -> Result<()> {
    write_json(doc, path)
}

pub fn read_fit_json(path: impl AsRef<Path>) -> Result<FitDocument> {
    let path = path.as_ref();
    // Check the version before the strict schema so newer files fail clearly.
    let probe: serde_json::Value = read_json(path)?;
    let version = probe
        .get("schema_version")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| Error::Format(format!("{}: missing schema_version", path.display())))?;
    check_schema(version, "fit")?;
    serde_json::from_value(probe).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text, path)
}

pub fn parse_toml<T: DeserializeOwned>(text: &str, source: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |span| text[..span.start].matches('\n').count() + 1);
        Error::Parse {
            line,
            message: format!("{}: {}", source.display(), e.message()),
        }
    })
}

/// Where the ground truth of a simulation comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSource {
    /// Generated two-party truth; see [`SyntheticTruth`].
    Synthetic {
        seed: u64,
        #[serde(flatten)]
        params: SyntheticTruth,
    },
    /// θ, α, β of a saved fit, with an optional metadata sidecar.
    FromFit {
        path: PathBuf,
        #[serde(default)]
        meta: Option<PathBuf>,
    },
    /// Row-major values given directly.
    Inline {
        dim: usize,
        theta: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        #[serde(default)]
        parties: Vec<String>,
    },
}

fn default_party() -> Party {
    Party::Dem
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    #[serde(default)]
    pub n_protesters: usize,
    #[serde(default)]
    pub protest_votes_per_protester: usize,
    #[serde(default = "default_party")]
    pub protester_party: Party,
    #[serde(default)]
    pub missing_rate: f64,
    pub truth: TruthSource,
}

impl SimulationConfig {
    /// Resolves the truth; relative paths are taken from `base`.
    pub fn to_spec(&self, base: &Path) -> Result<SimulationSpec> {
        let (truth, legislators) = match &self.truth {
            TruthSource::Synthetic { seed, params } => {
                let (state, legs) = params.generate(*seed)?;
                (state, Some(legs))
            }
            TruthSource::FromFit { path, meta } => {
                let doc = read_fit_json(base.join(path))?;
                let mut state = doc.to_fit()?.state;
                state.gamma = ShiftMatrix::new();
                let legs = match meta {
                    Some(m) => Some(metadata_for(&doc.legislators, &read_metadata_csv(base.join(m))?)),
                    None => None,
                };
                (state, legs)
            }
            TruthSource::Inline {
                dim,
                theta,
                alpha,
                beta,
                parties,
            } => {
                let state = ModelState {
                    dim: *dim,
                    theta: theta.clone(),
                    alpha: alpha.clone(),
                    beta: beta.clone(),
                    gamma: ShiftMatrix::new(),
                };
                state.validate()?;
                let legs = if parties.is_empty() {
                    None
                } else {
                    if parties.len() != state.n_legislators() {
                        return Err(Error::Format("inline truth needs one party per legislator".into()));
                    }
                    let legs = parties
                        .iter()
                        .enumerate()
                        .map(|(i, p)| Ok(LegislatorMeta::new(format!("L{:04}", i + 1)).with_party(p.parse()?)))
                        .collect::<Result<Vec<_>>>()?;
                    Some(legs)
                };
                (state, legs)
            }
        };
        Ok(SimulationSpec {
            truth,
            legislators,
            n_protesters: self.n_protesters,
            protest_votes_per_protester: self.protest_votes_per_protester,
            protester_party: self.protester_party,
            seed: self.seed,
            missing_rate: self.missing_rate,
        })
    }
}

fn default_dim() -> usize {
    1
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_prelim_lambda() -> f64 {
    DEFAULT_PRELIMINARY_LAMBDA
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_true() -> bool {
    true
}

fn default_prior_variance() -> f64 {
    25.0
}

/// Everything that determines a fit besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub penalty: Penalty,
    #[serde(default = "default_lambda", with = "lambda_format")]
    pub lambda: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub preliminary: bool,
    #[serde(default = "default_prelim_lambda")]
    pub preliminary_lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Prior variance of each `(α_j, β_j)` coordinate.
    #[serde(default = "default_prior_variance")]
    pub bill_prior_variance: f64,
    pub anchor: String,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            penalty: Penalty::L0,
            lambda: DEFAULT_LAMBDA,
            dim: 1,
            seed: 0,
            preliminary: true,
            preliminary_lambda: DEFAULT_PRELIMINARY_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
            bill_prior_variance: default_prior_variance(),
            anchor: "none".into(),
        }
    }
}

impl FitConfig {
    pub fn hyperparams(&self) -> Result<Hyperparams> {
        if !(self.bill_prior_variance > 0.0 && self.bill_prior_variance.is_finite()) {
            return Err(Error::Domain(format!(
                "bill_prior_variance must be positive, got {}",
                self.bill_prior_variance
            )));
        }
        let mut hp = Hyperparams::defaults(self.dim).with_penalty(self.penalty, self.lambda);
        hp.epsilon = self.epsilon;
        hp.max_iter = self.max_iter;
        hp.sigma_beta_tilde = nalgebra::DMatrix::identity(self.dim + 1, self.dim + 1) * self.bill_prior_variance;
        hp.validate()?;
        Ok(hp)
    }

    pub fn anchor(&self) -> Result<AnchorSpec> {
        self.anchor.parse()
    }

    /// The preliminary pass runs for l0 fits with a finite λ when enabled.
    pub fn uses_preliminary(&self) -> bool {
        self.preliminary && self.penalty == Penalty::L0 && self.lambda.is_finite()
    }
}

/// Record of one run: enough to repeat it and get the same bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String], seed: Option<u64>, config: serde_json::Value) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION.into(),
            tool: "robust-irt".into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            argv: argv.to_vec(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let m: Manifest = read_json(path)?;
    check_schema(&m.schema_version, "manifest")?;
    Ok(m)
}

/// Convenience: default preprocessing config when no file is given.
pub fn read_preprocess_config(path: Option<&Path>) -> Result<PreprocessConfig> {
    let config: PreprocessConfig = match path {
        Some(p) => read_toml(p)?,
        None => PreprocessConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<VoteMatrix> {
        parse_rollcall(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn small_table() {
        let m = parse("id,b1,b2\nx,1,0\ny,NA,1\n").unwrap();
        assert_eq!(m.votes(), &[Vote::Yea, Vote::Nay, Vote::Missing, Vote::Yea]);
        assert_eq!(m.legislators()[1].id, "y");
        assert_eq!(m.bills()[1].id, "b2");
        let blank = parse("id,b1\nx,\n").unwrap();
        assert_eq!(blank.get(0, 0), Vote::Missing);
    }

    #[test]
    fn parse_errors() {
        match parse("id,b1,b2\nx,1,0\ny,1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let err = parse("id,b1,b2\nx,1,yes\n").unwrap_err().to_string();
        assert!(err.contains("'yes'") && err.contains("'x'") && err.contains("'b2'"), "{err}");
        assert!(parse("id,b1,b1\nx,1,0\n").is_err());
        assert!(parse("id,b1\nx,1\nx,0\n").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn rollcall_round_trip() {
        let m = parse("legislator,b1,b2\nx,1,0\ny,NA,1\n").unwrap();
        let mut buf = Vec::new();
        write_rollcall(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "legislator,b1,b2\nx,1,0\ny,NA,1\n");
        assert_eq!(parse_rollcall(buf.as_slice(), Path::new("mem")).unwrap(), m);
    }

    fn tiny_doc(gamma: ShiftMatrix, lambda: f64) -> FitDocument {
        let state = ModelState {
            dim: 1,
            theta: vec![0.1, -1.0 / 3.0],
            alpha: vec![std::f64::consts::PI],
            beta: vec![1e-300],
            gamma,
        };
        let fit = FitResult::new(state, vec![-1.5, -1.25], 2, true);
        let hp = Hyperparams::defaults(1).with_penalty(Penalty::L0, lambda);
        FitDocument::from_fit(&fit, &hp, &["a".into(), "b".into()], &["j".into()]).unwrap()
    }

    #[test]
    fn fit_document_is_exact() {
        let doc = tiny_doc(ShiftMatrix::new(), f64::INFINITY);
        let text = to_json_string(&doc).unwrap();
        assert!(text.contains("\"gamma\": []"));
        assert!(text.contains("\"schema_version\": \"1\""));
        assert!(text.contains("\"lambda\": null"));
        assert!(text.contains("-3.3333333333333331e-1"));
        let back: FitDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        let fit = back.to_fit().unwrap();
        assert_eq!(fit.state.theta[1].to_bits(), (-1.0f64 / 3.0).to_bits());
        assert_eq!(back.lambda, f64::INFINITY);
    }

    #[test]
    fn unknown_major_version_rejected() {
        let mut doc = tiny_doc(ShiftMatrix::new(), 3.0);
        doc.schema_version = "2".into();
        assert!(matches!(doc.to_fit(), Err(Error::Format(_))));
        doc.schema_version = "1.4".into();
        assert!(doc.to_fit().is_ok());
    }

    #[test]
    fn gamma_triplets() {
        let mut g = ShiftMatrix::new();
        g.set(1, 0, -2.5);
        let doc = tiny_doc(g, 3.0);
        assert_eq!(doc.gamma, vec![GammaEntry { i: 1, j: 0, value: -2.5 }]);
        assert_eq!(doc.to_fit().unwrap().state.gamma.get(1, 0), -2.5);
    }

    #[test]
    fn configs_parse() {
        let sim: SimulationConfig = parse_toml(
            "seed = 2\nn_protesters = 4\nprotest_votes_per_protester = 80\n[truth]\nkind = \"synthetic\"\nseed = 1\nn_legislators = 40\nn_bills = 30\n",
            Path::new("sim.toml"),
        )
        .unwrap();
        let spec = sim.to_spec(Path::new(".")).unwrap();
        assert_eq!(spec.truth.n_legislators(), 40);
        assert_eq!(spec.n_protesters, 4);
        let fit: FitConfig = parse_toml("penalty = \"l0\"\nlambda = inf\nanchor = \"party:REP\"\n", Path::new("f.toml")).unwrap();
        assert_eq!(fit.lambda, f64::INFINITY);
        assert!(!fit.uses_preliminary());
        let err = parse_toml::<FitConfig>("penalty = \"l0\"\nanchor = \"none\"\nbogus = 1\n", Path::new("f.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }
}
