//! Experiment configuration: a line-oriented `key = value` text format with
//! `[section]` headers and `#` comments.
//!
//! ```text
//! [image]
//! rows = 64
//! cols = 64
//!
//! [sampling]
//! strategy = time_dependent
//! rows_per_frame = 4
//! center = 2
//! ```
//!
//! Every key is optional; omitted keys keep the desk-scale defaults of
//! [`ExperimentConfig::default`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::csrecon::CsConfig;
use crate::dictionary::GridSpec;
use crate::io;
use crate::metric::Ridge;
use crate::phantom::NoiseSpec;
use crate::pipeline::{Method, PipelineConfig};
use crate::sequence::{FaVariant, SequenceSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Each frame avoids the previous frame's rows outside the center set.
    TimeDependent,
    /// Variable-density rows drawn independently per frame.
    Independent,
    /// Every `epi_factor`-th row with a random shift per frame.
    Epi,
    Full,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::TimeDependent => "time_dependent",
            Strategy::Independent => "independent",
            Strategy::Epi => "epi",
            Strategy::Full => "full",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Strategy::TimeDependent, Strategy::Independent, Strategy::Epi, Strategy::Full]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sampling strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub rows_per_frame: usize,
    pub center: usize,
    pub power: f64,
    /// Row spacing of BLIP's EPI masks.
    pub epi_factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub enabled: bool,
    pub ridge: Ridge,
    /// Training phantoms use `seed + train_offset`.
    pub train_offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub rows: usize,
    pub cols: usize,
    pub sequence: SequenceSpec,
    pub sequence_seed: u64,
    pub sampling: SamplingConfig,
    pub grid: GridSpec,
    /// Add the tissue table's exact values to the grid.
    pub align_grid: bool,
    pub include_t2_above_t1: bool,
    pub tissue_noise: NoiseSpec,
    /// External label map replacing the synthetic phantom.
    pub label_map: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub metric: MetricConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Total standard deviation of complex k-space noise.
    pub noise_sigma: f64,
    /// When set, overrides `noise_sigma` per slice so the fully sampled first
    /// frame has this PSNR in dB.
    pub noise_psnr: Option<f64>,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            sequence: SequenceSpec::default(),
            sequence_seed: 0,
            sampling: SamplingConfig {
                strategy: Strategy::TimeDependent,
                rows_per_frame: 4,
                center: 2,
                power: 1.0,
                epi_factor: 16,
            },
            grid: GridSpec::Desk,
            align_grid: true,
            include_t2_above_t1: false,
            tissue_noise: NoiseSpec::default(),
            label_map: None,
            pipeline: PipelineConfig {
                cs: CsConfig {
                    alpha_wavelet: 1e-2,
                    alpha_tv: 1e-2,
                    ..CsConfig::default()
                },
                background: 0.05,
                ..PipelineConfig::default()
            },
            metric: MetricConfig {
                enabled: true,
                ridge: Ridge::Auto,
                train_offset: 1000,
            },
            methods: vec![Method::Mrf, Method::CsmrfMl],
            seeds: vec![1],
            noise_sigma: 0.0,
            noise_psnr: None,
            output: PathBuf::from("out"),
        }
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

fn tokenize(text: &str, path: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Config {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header {line:?}")))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        out.push(Entry {
            line: i + 1,
            section: section.clone(),
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(s.trim())).collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_range(v: &str) -> std::result::Result<(f64, f64), String> {
    let l: Vec<f64> = parse_list(v)?;
    match l.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected `lo, hi`, got {v:?}")),
    }
}

fn list_text<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut custom: (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) = (None, None, None);
        let mut grid_kind: Option<(usize, String)> = None;
        for e in tokenize(text, path)? {
            let v = e.value.as_str();
            let r: std::result::Result<(), String> = (|| {
                match (e.section.as_str(), e.key.as_str()) {
                    ("image", "rows") => cfg.rows = parse(v)?,
                    ("image", "cols") => cfg.cols = parse(v)?,
                    ("sequence", "length") => cfg.sequence.length = parse(v)?,
                    ("sequence", "eta_sigma") => cfg.sequence.eta_sigma = parse(v)?,
                    ("sequence", "variant") => cfg.sequence.variant = v.parse::<FaVariant>().map_err(|e| e.to_string())?,
                    ("sequence", "tr_jitter_ms") => {
                        let j: f64 = parse(v)?;
                        cfg.sequence.tr_jitter_ms = (j > 0.0).then_some(j);
                    }
                    ("sequence", "seed") => cfg.sequence_seed = parse(v)?,
                    ("sampling", "strategy") => cfg.sampling.strategy = v.parse().map_err(|e: Error| e.to_string())?,
                    ("sampling", "rows_per_frame") => cfg.sampling.rows_per_frame = parse(v)?,
                    ("sampling", "center") => cfg.sampling.center = parse(v)?,
                    ("sampling", "power") => cfg.sampling.power = parse(v)?,
                    ("sampling", "epi_factor") => cfg.sampling.epi_factor = parse(v)?,
                    ("dictionary", "grid") => grid_kind = Some((e.line, v.to_string())),
                    ("dictionary", "t1") => custom.0 = Some(parse_list(v)?),
                    ("dictionary", "t2") => custom.1 = Some(parse_list(v)?),
                    ("dictionary", "b0") => custom.2 = Some(parse_list(v)?),
                    ("dictionary", "align_tissues") => cfg.align_grid = parse_bool(v)?,
                    ("dictionary", "include_t2_above_t1") => cfg.include_t2_above_t1 = parse_bool(v)?,
                    ("phantom", "t1_noise") => cfg.tissue_noise.t1_range = parse_range(v)?,
                    ("phantom", "t2_noise") => cfg.tissue_noise.t2_range = parse_range(v)?,
                    ("phantom", "b0_noise") => cfg.tissue_noise.b0_range = parse_range(v)?,
                    ("phantom", "label_map") => cfg.label_map = Some(PathBuf::from(v)),
                    ("cs", "alpha_wavelet") => cfg.pipeline.cs.alpha_wavelet = parse(v)?,
                    ("cs", "alpha_tv") => cfg.pipeline.cs.alpha_tv = parse(v)?,
                    ("cs", "smooth_mu") => cfg.pipeline.cs.smooth_mu = parse(v)?,
                    ("cs", "max_iters") => cfg.pipeline.cs.max_iters = parse(v)?,
                    ("cs", "grad_tol") => cfg.pipeline.cs.grad_tol = parse(v)?,
                    ("cs", "wavelet_levels") => cfg.pipeline.cs.wavelet_levels = parse(v)?,
                    ("cs", "outer_iters") => cfg.pipeline.outer_iters = parse(v)?,
                    ("matching", "background") => cfg.pipeline.background = parse(v)?,
                    ("metric", "enabled") => cfg.metric.enabled = parse_bool(v)?,
                    ("metric", "ridge") => {
                        cfg.metric.ridge = if v == "auto" { Ridge::Auto } else { Ridge::Value(parse(v)?) }
                    }
                    ("metric", "train_offset") => cfg.metric.train_offset = parse(v)?,
                    ("blip", "iters") => cfg.pipeline.blip_iters = parse(v)?,
                    ("blip", "step") => cfg.pipeline.blip_step = parse(v)?,
                    ("experiment", "methods") => {
                        cfg.methods = v
                            .split(',')
                            .map(|s| s.trim().parse::<Method>().map_err(|e| e.to_string()))
                            .collect::<std::result::Result<_, _>>()?
                    }
                    ("experiment", "seeds") => cfg.seeds = parse_list(v)?,
                    ("experiment", "noise_sigma") => cfg.noise_sigma = parse(v)?,
                    ("experiment", "noise_psnr") => cfg.noise_psnr = if v == "none" { None } else { Some(parse(v)?) },
                    ("experiment", "output") => cfg.output = PathBuf::from(v),
                    (s, k) => return Err(format!("unknown key `{k}` in section [{s}]")),
                }
                Ok(())
            })();
            r.map_err(|message| Error::Config {
                path: path.to_string(),
                line: e.line,
                message,
            })?;
        }
        if let Some((line, kind)) = grid_kind {
            cfg.grid = match kind.as_str() {
                "paper" => GridSpec::Paper,
                "desk" => GridSpec::Desk,
                "custom" => match custom {
                    (Some(t1), Some(t2), Some(b0)) => GridSpec::Custom { t1, t2, b0 },
                    _ => {
                        return Err(Error::Config {
                            path: path.to_string(),
                            line,
                            message: "custom grid needs t1, t2 and b0 lists".into(),
                        })
                    }
                },
                other => {
                    return Err(Error::Config {
                        path: path.to_string(),
                        line,
                        message: format!("unknown grid {other:?}"),
                    })
                }
            };
        }
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = io::read_file(path)?;
        Self::parse(&String::from_utf8_lossy(&bytes), &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 8 || self.cols < 8 {
            return Err(Error::InvalidArgument("image sides must be >= 8".into()));
        }
        if self.sequence.length == 0 {
            return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
        }
        let s = &self.sampling;
        if s.rows_per_frame == 0 || s.rows_per_frame > self.rows {
            return Err(Error::InvalidArgument(format!(
                "rows_per_frame must be in 1..={}",
                self.rows
            )));
        }
        if s.strategy == Strategy::TimeDependent && self.rows + s.center < 2 * s.rows_per_frame {
            return Err(Error::InfeasibleSampling(format!(
                "{} rows with center {} cannot hold two disjoint frames of {}",
                self.rows, s.center, s.rows_per_frame
            )));
        }
        if s.epi_factor == 0 {
            return Err(Error::InvalidArgument("epi_factor must be >= 1".into()));
        }
        self.tissue_noise.validate()?;
        self.pipeline.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method required".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
        }
        if self.noise_psnr.is_some_and(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("noise_psnr must be finite".into()));
        }
        if self.methods.contains(&Method::CsmrfMl) && !self.metric.enabled {
            return Err(Error::InvalidArgument("csmrf_ml requires [metric] enabled = true".into()));
        }
        Ok(())
    }

    /// Text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cs: &CsConfig = &self.pipeline.cs;
        writeln!(s, "[image]\nrows = {}\ncols = {}\n", self.rows, self.cols).unwrap();
        writeln!(
            s,
            "[sequence]\nlength = {}\neta_sigma = {}\nvariant = {}\ntr_jitter_ms = {}\nseed = {}\n",
            self.sequence.length,
            self.sequence.eta_sigma,
            match self.sequence.variant {
                FaVariant::Literal => "literal",
                FaVariant::Corrected => "corrected",
            },
            self.sequence.tr_jitter_ms.unwrap_or(0.0),
            self.sequence_seed
        )
        .unwrap();
        writeln!(
            s,
            "[sampling]\nstrategy = {}\nrows_per_frame = {}\ncenter = {}\npower = {}\nepi_factor = {}\n",
            self.sampling.strategy.name(),
            self.sampling.rows_per_frame,
            self.sampling.center,
            self.sampling.power,
            self.sampling.epi_factor
        )
        .unwrap();
        s.push_str("[dictionary]\n");
        match &self.grid {
            GridSpec::Paper => s.push_str("grid = paper\n"),
            GridSpec::Desk => s.push_str("grid = desk\n"),
            GridSpec::Custom { t1, t2, b0 } => {
                writeln!(s, "grid = custom\nt1 = {}\nt2 = {}\nb0 = {}", list_text(t1), list_text(t2), list_text(b0)).unwrap()
            }
        }
        writeln!(
            s,
            "align_tissues = {}\ninclude_t2_above_t1 = {}\n",
            self.align_grid, self.include_t2_above_t1
        )
        .unwrap();
        let n = &self.tissue_noise;
        writeln!(
            s,
            "[phantom]\nt1_noise = {}, {}\nt2_noise = {}, {}\nb0_noise = {}, {}",
            n.t1_range.0, n.t1_range.1, n.t2_range.0, n.t2_range.1, n.b0_range.0, n.b0_range.1
        )
        .unwrap();
        if let Some(p) = &self.label_map {
            writeln!(s, "label_map = {}", p.display()).unwrap();
        }
        writeln!(
            s,
            "\n[cs]\nalpha_wavelet = {}\nalpha_tv = {}\nsmooth_mu = {}\nmax_iters = {}\ngrad_tol = {}\nwavelet_levels = {}\nouter_iters = {}\n",
            cs.alpha_wavelet, cs.alpha_tv, cs.smooth_mu, cs.max_iters, cs.grad_tol, cs.wavelet_levels, self.pipeline.outer_iters
        )
        .unwrap();
        writeln!(s, "[matching]\nbackground = {}\n", self.pipeline.background).unwrap();
        writeln!(
            s,
            "[metric]\nenabled = {}\nridge = {}\ntrain_offset = {}\n",
            self.metric.enabled,
            match self.metric.ridge {
                Ridge::Auto => "auto".to_string(),
                Ridge::Value(r) => r.to_string(),
            },
            self.metric.train_offset
        )
        .unwrap();
        writeln!(s, "[blip]\niters = {}\nstep = {}\n", self.pipeline.blip_iters, self.pipeline.blip_step).unwrap();
        writeln!(
            s,
            "[experiment]\nmethods = {}\nseeds = {}\nnoise_sigma = {}\nnoise_psnr = {}\noutput = {}",
            list_text(&self.methods),
            list_text(&self.seeds),
            self.noise_sigma,
            self.noise_psnr.map_or("none".to_string(), |p| p.to_string()),
            self.output.display()
        )
        .unwrap();
        s
    }
}
