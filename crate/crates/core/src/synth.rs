//! Deterministic synthetic ICU cohorts with implanted septic deterioration.
//!
//! Every patient draws healthy baselines, wanders around them with AR(1)
//! noise and, if septic, drifts toward organ dysfunction from
//! `onset - deterioration_lead` onward. Patient `i` is a pure function of
//! `(config, i)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cohort, PatientSeries};
use crate::schema::{FeatureGroup, FeatureSchema};
use crate::sofa::{score_cardiovascular, score_coagulation, score_liver, score_renal};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    ConfigInvalid(String),
}

/// Marginal-distribution preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    MimicLike,
    ChallengeLike,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::MimicLike => "mimic-like",
            Profile::ChallengeLike => "challenge-like",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mimic-like" => Some(Profile::MimicLike),
            "challenge-like" => Some(Profile::ChallengeLike),
            _ => None,
        }
    }

    /// Preset config for `n` patients.
    pub fn config(self, n_patients: usize, seed: u64) -> GenConfig {
        let (sepsis_prevalence, missing_rate) = match self {
            Profile::MimicLike => (0.20, 0.21),
            Profile::ChallengeLike => (0.30, 0.63),
        };
        GenConfig {
            n_patients,
            sepsis_prevalence,
            missing_rate,
            stay_min: 24,
            stay_max: 72,
            seed,
            deterioration_lead: 12,
            profile: self,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_patients: usize,
    pub sepsis_prevalence: f64,
    pub missing_rate: f64,
    pub stay_min: usize,
    pub stay_max: usize,
    pub seed: u64,
    pub deterioration_lead: usize,
    pub profile: Profile,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            sepsis_prevalence: 0.20,
            missing_rate: 0.20,
            ..Profile::MimicLike.config(1000, 0)
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.into()));
        if !(0.0..=1.0).contains(&self.sepsis_prevalence) {
            return bad("sepsis_prevalence must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1]");
        }
        if self.stay_min == 0 || self.stay_min > self.stay_max {
            return bad("stay range must be positive and ordered");
        }
        if self.deterioration_lead >= self.stay_min {
            return bad("deterioration_lead must be shorter than the minimum stay");
        }
        Ok(())
    }

    pub fn n_septic(&self) -> usize {
        (self.sepsis_prevalence * self.n_patients as f64).round() as usize
    }
}

/// Healthy-state parameters of one variable.
#[derive(Debug, Clone, Copy)]
struct Vital {
    mean: f64,
    between: f64,
    noise: f64,
    lo: f64,
    hi: f64,
}

const fn v(mean: f64, between: f64, noise: f64, lo: f64, hi: f64) -> Vital {
    Vital {
        mean,
        between,
        noise,
        lo,
        hi,
    }
}

/// Per-feature baselines in standard-schema order (demographics excluded,
/// derived ratios computed afterwards).
fn baselines(profile: Profile) -> [(&'static str, Vital); 22] {
    let mut b = [
        ("HR", v(80.0, 10.0, 4.0, 30.0, 220.0)),
        ("Temp", v(37.0, 0.3, 0.2, 33.0, 42.0)),
        ("SBP", v(122.0, 12.0, 6.0, 50.0, 240.0)),
        ("MAP", v(83.0, 5.0, 3.0, 35.0, 160.0)),
        ("DBP", v(63.0, 7.0, 4.0, 20.0, 140.0)),
        ("Resp", v(17.0, 2.5, 1.5, 5.0, 60.0)),
        ("FiO2", v(0.35, 0.07, 0.03, 0.21, 1.0)),
        ("SaO2", v(97.0, 1.5, 0.8, 60.0, 100.0)),
        ("pH", v(7.40, 0.03, 0.02, 6.8, 7.8)),
        ("AST", v(32.0, 10.0, 4.0, 5.0, 5000.0)),
        ("BUN", v(16.0, 5.0, 1.5, 2.0, 200.0)),
        ("Calcium", v(8.8, 0.4, 0.2, 5.0, 13.0)),
        ("Chloride", v(104.0, 3.0, 1.0, 80.0, 130.0)),
        ("Creatinine", v(0.9, 0.18, 0.06, 0.2, 15.0)),
        ("Glucose", v(125.0, 20.0, 12.0, 30.0, 800.0)),
        ("Potassium", v(4.1, 0.3, 0.15, 2.0, 8.0)),
        ("TotalBilirubin", v(0.7, 0.2, 0.07, 0.1, 40.0)),
        ("Hct", v(33.0, 4.0, 1.0, 15.0, 60.0)),
        ("Hgb", v(11.0, 1.3, 0.4, 4.0, 20.0)),
        ("PTT", v(32.0, 5.0, 2.0, 15.0, 150.0)),
        ("WBC", v(9.0, 2.5, 0.8, 0.5, 80.0)),
        ("Platelets", v(235.0, 45.0, 10.0, 5.0, 900.0)),
    ];
    if profile == Profile::ChallengeLike {
        for (name, p) in b.iter_mut() {
            let (shift, scale) = match *name {
                "HR" => (6.0, 1.2),
                "Temp" => (-0.15, 1.2),
                "SBP" => (-4.0, 1.1),
                "MAP" => (-2.0, 1.2),
                "Resp" => (2.0, 1.2),
                "FiO2" => (0.08, 1.0),
                "Creatinine" => (0.15, 1.2),
                "Glucose" => (12.0, 1.3),
                "WBC" => (1.5, 1.2),
                "Platelets" => (-20.0, 1.1),
                "BUN" => (5.0, 1.2),
                _ => (0.0, 1.15),
            };
            p.mean += shift;
            p.between *= scale;
            p.noise *= scale;
        }
    }
    b
}

/// Physiological axes along which a stay can deteriorate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Inflammation = 0,
    Coagulation = 1,
    Liver = 2,
    Cardiovascular = 3,
    Renal = 4,
    Respiratory = 5,
}

const N_AXES: usize = 6;
const ORGANS: [Axis; 5] = [
    Axis::Coagulation,
    Axis::Liver,
    Axis::Cardiovascular,
    Axis::Renal,
    Axis::Respiratory,
];

/// Axis and full-deterioration shift of a variable (platelets fall
/// multiplicatively, see `PLATELET_FALL`).
fn drift(name: &str) -> Option<(Axis, f64)> {
    use Axis::*;
    Some(match name {
        "HR" => (Inflammation, 22.0),
        "Temp" => (Inflammation, 1.2),
        "Resp" => (Inflammation, 7.0),
        "WBC" => (Inflammation, 7.0),
        "Glucose" => (Inflammation, 25.0),
        "Platelets" => (Coagulation, 0.0),
        "PTT" => (Coagulation, 10.0),
        "TotalBilirubin" => (Liver, 2.0),
        "AST" => (Liver, 40.0),
        "MAP" => (Cardiovascular, -20.0),
        "SBP" => (Cardiovascular, -24.0),
        "DBP" => (Cardiovascular, -12.0),
        "Creatinine" => (Renal, 1.4),
        "BUN" => (Renal, 14.0),
        "FiO2" => (Respiratory, 0.15),
        "SaO2" => (Respiratory, -3.5),
        "pH" => (Respiratory, -0.08),
        _ => return None,
    })
}

const PLATELET_FALL: f64 = 0.62;

/// A deterioration trajectory: linear ramp from `start` over `ramp` hours,
/// optionally recovering after a plateau.
#[derive(Debug, Clone)]
struct Episode {
    start: f64,
    ramp: f64,
    weights: [f64; N_AXES],
    recover_at: Option<f64>,
}

impl Episode {
    fn progress(&self, t: f64) -> f64 {
        let rise = ((t - self.start) / self.ramp).clamp(0.0, 1.4);
        match self.recover_at {
            Some(r) if t > r => (rise - (t - r) / 12.0).max(0.0),
            _ => rise,
        }
    }

    /// Sepsis: inflammatory response together with at least one failing organ.
    fn septic(rng: &mut ChaCha8Rng, onset: usize, lead: usize) -> Self {
        let mut weights = [0.0; N_AXES];
        weights[Axis::Inflammation as usize] = rng.random_range(0.4..1.2);
        for a in ORGANS {
            weights[a as usize] = rng.random_range(0.0..1.0);
        }
        let lead_organ = ORGANS[rng.random_range(0..ORGANS.len())];
        weights[lead_organ as usize] = rng.random_range(0.7..1.2);
        Episode {
            start: (onset - lead) as f64,
            ramp: lead as f64,
            weights,
            recover_at: None,
        }
    }

    /// Non-septic deterioration: inflammation alone, or organ dysfunction
    /// without an inflammatory response.
    fn confounder(rng: &mut ChaCha8Rng, m: usize) -> Self {
        let mut weights = [0.0; N_AXES];
        if rng.random_bool(0.5) {
            weights[Axis::Inflammation as usize] = rng.random_range(0.4..1.2);
        } else {
            for _ in 0..rng.random_range(1..=2) {
                let a = ORGANS[rng.random_range(0..ORGANS.len())];
                weights[a as usize] = rng.random_range(0.5..1.2);
            }
        }
        let start = rng.random_range(0.0..m as f64);
        let ramp = rng.random_range(6.0..18.0);
        let plateau = rng.random_range(6.0..24.0);
        Episode {
            start,
            ramp,
            weights,
            recover_at: Some(start + ramp + plateau),
        }
    }
}

const AR_PHI: f64 = 0.9;

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Schema column, its vital parameters and its optional axis loading.
type FeatureSlot = (usize, Vital, Option<(Axis, f64)>);

struct Layout {
    features: Vec<FeatureSlot>,
    age: usize,
    gender: usize,
    icu_hours: usize,
    bun: usize,
    creatinine: usize,
    bun_cr: usize,
    sao2: usize,
    fio2: usize,
    sao2_fio2: usize,
    platelets: usize,
    sofa_vars: [usize; 4],
    clinical: Vec<usize>,
}

impl Layout {
    fn new(schema: &FeatureSchema, profile: Profile) -> Self {
        let idx = |n: &str| {
            schema
                .index_of(n)
                .unwrap_or_else(|| panic!("synthetic generator needs column {n}"))
        };
        Layout {
            features: baselines(profile)
                .iter()
                .map(|(n, p)| (idx(n), *p, drift(n)))
                .collect(),
            age: idx("Age"),
            gender: idx("Gender"),
            icu_hours: idx("ICU_hours"),
            bun: idx("BUN"),
            creatinine: idx("Creatinine"),
            bun_cr: idx("BUN_CR"),
            sao2: idx("SaO2"),
            fio2: idx("FiO2"),
            sao2_fio2: idx("SaO2_FiO2"),
            platelets: idx("Platelets"),
            sofa_vars: [
                idx("Platelets"),
                idx("TotalBilirubin"),
                idx("MAP"),
                idx("Creatinine"),
            ],
            clinical: (0..schema.len())
                .filter(|&j| schema.features()[j].group != FeatureGroup::Demographic)
                .collect(),
        }
    }
}

/// Generates patient `index` of the cohort described by `cfg`.
pub fn generate_patient(
    cfg: &GenConfig,
    schema: &FeatureSchema,
    index: u64,
    septic: bool,
) -> Result<PatientSeries, SynthError> {
    cfg.validate()?;
    Ok(generate_with(
        cfg,
        schema,
        &Layout::new(schema, cfg.profile),
        index,
        septic,
    ))
}

fn generate_with(
    cfg: &GenConfig,
    schema: &FeatureSchema,
    lay: &Layout,
    index: u64,
    septic: bool,
) -> PatientSeries {
    let f = schema.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let z = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let m = rng.random_range(cfg.stay_min..=cfg.stay_max);
    let lead = cfg.deterioration_lead;
    let onset = septic.then(|| rng.random_range(lead..m));
    let patient_missing = (cfg.missing_rate + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0);
    let age = (62.0 + 15.0 * z(&mut rng)).clamp(18.0, 95.0).round();
    let gender = if rng.random_bool(0.56) { 1.0 } else { 0.0 };

    // chronic abnormality in some non-septic stays keeps SOFA labels from
    // being a pure sepsis indicator
    let chronic: Option<(usize, f64)> = if !septic && rng.random_bool(0.2) {
        let pick = rng.random_range(0..5);
        Some(match pick {
            0 => (lay.platelets, -rng.random_range(60.0..150.0)),
            1 => (lay.creatinine, rng.random_range(0.4..1.3)),
            2 => (lay.sofa_vars[1], rng.random_range(0.6..1.8)),
            3 => (lay.sofa_vars[2], -rng.random_range(8.0..15.0)),
            _ => (lay.features[0].0, rng.random_range(15.0..30.0)),
        })
    } else {
        None
    };

    let episode = match onset {
        Some(o) => Some(Episode::septic(&mut rng, o, lead)),
        None if rng.random_bool(0.35) => Some(Episode::confounder(&mut rng, m)),
        None => None,
    };

    let base: Vec<f64> = lay
        .features
        .iter()
        .map(|(j, p, _)| {
            let mut b = p.mean + p.between * z(&mut rng);
            if let Some((cj, delta)) = chronic {
                if cj == *j {
                    b += delta;
                }
            }
            b
        })
        .collect();
    let mut ar: Vec<f64> = lay
        .features
        .iter()
        .map(|(_, p, _)| p.noise * z(&mut rng))
        .collect();
    let innov = (1.0 - AR_PHI * AR_PHI).sqrt();

    let mut truth = vec![0.0; m * f];
    for t in 0..m {
        let progress = episode.as_ref().map_or(0.0, |e| e.progress(t as f64));
        let row = &mut truth[t * f..(t + 1) * f];
        row[lay.age] = age;
        row[lay.gender] = gender;
        row[lay.icu_hours] = (t + 1) as f64;
        for (k, (j, p, d)) in lay.features.iter().enumerate() {
            if t > 0 {
                ar[k] = AR_PHI * ar[k] + innov * p.noise * z(&mut rng);
            }
            let mut val = base[k] + ar[k];
            if let (Some((axis, shift)), Some(e)) = (d, &episode) {
                let w = e.weights[*axis as usize] * progress;
                val = if *j == lay.platelets {
                    base[k] * (1.0 - PLATELET_FALL * w).max(0.05) + ar[k]
                } else {
                    val + shift * w
                };
            }
            row[*j] = round2(val.clamp(p.lo, p.hi));
        }
        row[lay.bun_cr] = round2(row[lay.bun] / row[lay.creatinine]);
        row[lay.sao2_fio2] = round2(row[lay.sao2] / row[lay.fio2]);
    }

    if let Some(o) = onset {
        let row = &mut truth[o * f..(o + 1) * f];
        let sum = four_sum(row, lay);
        if sum < 2 {
            let need = 2 - sum + score_coagulation(row[lay.platelets]).unwrap_or(0);
            // raise coagulation alone to cover the shortfall
            row[lay.platelets] = match need {
                0 | 1 => row[lay.platelets].min(149.0),
                2 => row[lay.platelets].min(95.0),
                3 => row[lay.platelets].min(45.0),
                _ => row[lay.platelets].min(15.0),
            };
        }
    }

    let mut cells: Vec<Option<f64>> = truth.into_iter().map(Some).collect();
    for t in 0..m {
        for &j in &lay.clinical {
            let keep = onset == Some(t) && lay.sofa_vars.contains(&j);
            if rng.random_bool(patient_missing) && !keep {
                cells[t * f + j] = None;
            }
        }
    }
    PatientSeries::new(format!("p{index:06}"), f, cells, onset)
        .expect("generator output is well-formed")
}

fn four_sum(row: &[f64], lay: &Layout) -> u8 {
    let [pl, bili, map, cr] = lay.sofa_vars.map(|j| row[j]);
    [
        score_coagulation(pl),
        score_liver(bili),
        score_cardiovascular(map, None),
        score_renal(cr, None),
    ]
    .into_iter()
    .map(|s| s.unwrap_or(0))
    .sum()
}

/// Generates the whole cohort: `round(prevalence · n)` septic patients at
/// seeded positions.
pub fn generate_cohort(cfg: &GenConfig) -> Result<Cohort, SynthError> {
    cfg.validate()?;
    let schema = FeatureSchema::standard();
    let lay = Layout::new(&schema, cfg.profile);
    let mut order: Vec<usize> = (0..cfg.n_patients).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let mut septic = vec![false; cfg.n_patients];
    for &i in &order[..cfg.n_septic()] {
        septic[i] = true;
    }
    let patients = (0..cfg.n_patients)
        .map(|i| generate_with(cfg, &schema, &lay, i as u64, septic[i]))
        .collect();
    Ok(Cohort::new(schema, patients))
}
