//! Synthetic populations with planted day-of-week / weekly components,
//! grouped user memberships and demographic coupling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::demographics::{AgeCohort, Child, DemographicTable, Demographics, Gender, Marital};
use crate::error::{Error, Result};
use crate::ingest::DAYS_PER_WEEK;
use crate::matrix::Matrix;
use crate::model::FactorModel;
use crate::tensor::{reconstruct, DenseTensor3};

/// Day-of-week activity shape (Monday first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayTemplate {
    /// Mass concentrated on Monday–Friday.
    Weekday,
    SaturdayPeak,
    SundayPeak,
    Custom(Vec<f64>),
}

impl DayTemplate {
    /// Profile normalized to unit sum.
    pub fn profile(&self) -> Result<[f64; DAYS_PER_WEEK]> {
        let raw: Vec<f64> = match self {
            DayTemplate::Weekday => vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.05, 0.05],
            DayTemplate::SaturdayPeak => vec![0.1, 0.1, 0.1, 0.1, 0.1, 1.0, 0.1],
            DayTemplate::SundayPeak => vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 1.0],
            DayTemplate::Custom(v) => v.clone(),
        };
        if raw.len() != DAYS_PER_WEEK || raw.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::arg("day template needs 7 finite non-negative values"));
        }
        let s: f64 = raw.iter().sum();
        if s <= 0.0 {
            return Err(Error::arg("day template is all zeros"));
        }
        let mut out = [0.0; DAYS_PER_WEEK];
        for (o, v) in out.iter_mut().zip(raw) {
            *o = v / s;
        }
        Ok(out)
    }
}

/// Week-to-week activity shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeeklyProfile {
    Flat,
    /// `1 + amplitude · sin(2π k / period + phase)`, amplitude < 1.
    Sinusoid { period: f64, amplitude: f64, phase: f64 },
    /// I.i.d. uniform on `[low, high]` per week.
    Uniform { low: f64, high: f64 },
    Custom(Vec<f64>),
}

impl WeeklyProfile {
    fn values(&self, weeks: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            WeeklyProfile::Flat => vec![1.0; weeks],
            WeeklyProfile::Sinusoid { period, amplitude, phase } => {
                if !(*period > 0.0) || !(0.0..=1.0).contains(amplitude) {
                    return Err(Error::arg("sinusoid needs period > 0 and amplitude in [0, 1]"));
                }
                (0..weeks)
                    .map(|k| 1.0 + amplitude * (std::f64::consts::TAU * k as f64 / period + phase).sin())
                    .collect()
            }
            WeeklyProfile::Uniform { low, high } => {
                if !(0.0 <= *low && low <= high) {
                    return Err(Error::arg("uniform weekly profile needs 0 <= low <= high"));
                }
                (0..weeks).map(|_| rng.random_range(*low..=*high)).collect()
            }
            WeeklyProfile::Custom(v) => {
                if v.len() != weeks {
                    return Err(Error::arg(format!("custom weekly profile has {} values for {weeks} weeks", v.len())));
                }
                v.clone()
            }
        };
        if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::arg("weekly profile must be non-negative"));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub day: DayTemplate,
    pub weekly: WeeklyProfile,
}

/// Category probabilities for one user group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryProbs {
    pub female: f64,
    pub married: f64,
    pub with_children: f64,
    /// Unnormalized weights of age cohorts 1..=6.
    pub age: [f64; 6],
}

impl Default for CategoryProbs {
    /// Population marginals of the reference receipt panel (2,624 users).
    fn default() -> Self {
        let n = 2624.0;
        CategoryProbs {
            female: 1887.0 / n,
            married: 1628.0 / n,
            with_children: 1279.0 / n,
            age: [69.0, 690.0, 824.0, 673.0, 331.0, 137.0],
        }
    }
}

impl CategoryProbs {
    fn validate(&self) -> Result<()> {
        for p in [self.female, self.married, self.with_children] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.age.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || self.age.iter().sum::<f64>() <= 0.0 {
            return Err(Error::arg("age weights must be non-negative and not all zero"));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Demographics {
        let gender = if rng.random::<f64>() < self.female { Gender::Female } else { Gender::Male };
        let marital = if rng.random::<f64>() < self.married { Marital::Married } else { Marital::Unmarried };
        let child = if rng.random::<f64>() < self.with_children { Child::Yes } else { Child::No };
        let total: f64 = self.age.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut cohort = 6;
        for (c, w) in self.age.iter().enumerate() {
            if u < *w {
                cohort = c + 1;
                break;
            }
            u -= w;
        }
        Demographics {
            gender,
            age_cohort: AgeCohort::new(cohort as u8).expect("1..=6"),
            marital,
            child,
        }
    }
}

/// A planted user group: relative size, prototype component shares and
/// demographic distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub weight: f64,
    pub shares: Vec<f64>,
    #[serde(default)]
    pub demographics: CategoryProbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Each cell becomes `s · Poisson(μ / s)` with `s = level²`; level 1 is
    /// plain Poisson counting noise, level 0 is noiseless.
    Poisson { level: f64 },
    /// Additive Gaussian noise truncated at zero.
    Gaussian { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_weeks: usize,
    pub components: Vec<ComponentSpec>,
    pub groups: Vec<GroupSpec>,
    /// Expected items per user per week at unit activity.
    pub items_per_week: f64,
    /// User activity multiplier is uniform on `[1 − spread, 1 + spread]`.
    pub activity_spread: f64,
    /// Each share gets an extra uniform `[0, jitter)` term.
    pub membership_jitter: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Weekday / Saturday / Sunday components with five user groups: three
    /// pure and two mixed.
    pub fn three_patterns(n_users: usize, n_weeks: usize, seed: u64) -> Self {
        let components = vec![
            ComponentSpec {
                day: DayTemplate::Weekday,
                weekly: WeeklyProfile::Sinusoid { period: 13.0, amplitude: 0.5, phase: 0.0 },
            },
            ComponentSpec {
                day: DayTemplate::SaturdayPeak,
                weekly: WeeklyProfile::Sinusoid { period: 9.0, amplitude: 0.5, phase: 2.0 },
            },
            ComponentSpec {
                day: DayTemplate::SundayPeak,
                weekly: WeeklyProfile::Sinusoid { period: 21.0, amplitude: 0.5, phase: 4.0 },
            },
        ];
        let group = |shares: Vec<f64>| GroupSpec {
            weight: 1.0,
            shares,
            demographics: CategoryProbs::default(),
        };
        SyntheticSpec {
            n_users,
            n_weeks,
            components,
            groups: vec![
                group(vec![1.0, 0.0, 0.0]),
                group(vec![0.0, 1.0, 0.0]),
                group(vec![0.0, 0.0, 1.0]),
                group(vec![0.5, 0.5, 0.0]),
                group(vec![0.0, 0.5, 0.5]),
            ],
            items_per_week: 20.0,
            activity_spread: 0.5,
            membership_jitter: 0.05,
            noise: NoiseModel::None,
            seed,
        }
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_weeks == 0 {
            return Err(Error::arg("n_users and n_weeks must be >= 1"));
        }
        if self.components.is_empty() {
            return Err(Error::arg("at least one component is required"));
        }
        let profiles = self
            .components
            .iter()
            .map(|c| c.day.profile())
            .collect::<Result<Vec<_>>>()?;
        for a in 0..profiles.len() {
            for b in 0..a {
                if profiles[a] == profiles[b] {
                    return Err(Error::arg(format!("components {b} and {a} share a day template")));
                }
            }
        }
        if self.groups.is_empty() {
            return Err(Error::arg("at least one user group is required"));
        }
        for (g, grp) in self.groups.iter().enumerate() {
            if grp.shares.len() != self.rank() {
                return Err(Error::arg(format!("group {g} has {} shares for rank {}", grp.shares.len(), self.rank())));
            }
            if grp.shares.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(grp.weight > 0.0) {
                return Err(Error::arg(format!("group {g} needs non-negative shares and positive weight")));
            }
            grp.demographics.validate()?;
        }
        if !(self.items_per_week >= 0.0) || !(0.0..=1.0).contains(&self.activity_spread) || !(self.membership_jitter >= 0.0) {
            return Err(Error::arg("invalid activity parameters"));
        }
        match self.noise {
            NoiseModel::Poisson { level } if !(level >= 0.0 && level.is_finite()) => {
                Err(Error::arg("poisson noise level must be >= 0"))
            }
            NoiseModel::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::arg("gaussian sigma must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Users per group: proportional to weight, remainders to the largest
    /// fractional parts (lowest group id on ties).
    pub fn group_sizes(&self) -> Vec<usize> {
        let total: f64 = self.groups.iter().map(|g| g.weight).sum();
        let exact: Vec<f64> = self.groups.iter().map(|g| g.weight / total * self.n_users as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rest = self.n_users - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for g in order {
            if rest == 0 {
                break;
            }
            sizes[g] += 1;
            rest -= 1;
        }
        sizes
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub tensor: DenseTensor3,
    pub truth: FactorModel,
    pub demographics: DemographicTable,
    /// Planted group of each user.
    pub labels: Vec<usize>,
    pub user_ids: Vec<String>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let rank = spec.rank();
    let (ni, nk) = (spec.n_users, spec.n_weeks);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut b = Matrix::zeros(DAYS_PER_WEEK, rank);
    let mut c = Matrix::zeros(nk, rank);
    for (r, comp) in spec.components.iter().enumerate() {
        b.set_column(r, &comp.day.profile()?);
        c.set_column(r, &comp.weekly.values(nk, &mut rng)?);
    }

    let width = (ni as f64).log10().floor() as usize + 1;
    let user_ids: Vec<String> = (0..ni).map(|i| format!("u{:0width$}", i + 1)).collect();
    let mut labels = Vec::with_capacity(ni);
    for (g, n) in spec.group_sizes().into_iter().enumerate() {
        labels.extend(std::iter::repeat_n(g, n));
    }

    let mut a = Matrix::zeros(ni, rank);
    let mut demographics = DemographicTable::new();
    for i in 0..ni {
        let grp = &spec.groups[labels[i]];
        let activity = spec.items_per_week * (1.0 + spec.activity_spread * (2.0 * rng.random::<f64>() - 1.0));
        for r in 0..rank {
            a[(i, r)] = activity * (grp.shares[r] + spec.membership_jitter * rng.random::<f64>());
        }
        demographics.insert(user_ids[i].clone(), grp.demographics.sample(&mut rng))?;
    }

    let truth = FactorModel::new(a, b, c)?;
    let clean = reconstruct(&truth)?;
    let tensor = match spec.noise {
        NoiseModel::None => clean,
        NoiseModel::Poisson { level } if level == 0.0 => clean,
        NoiseModel::Gaussian { sigma } if sigma == 0.0 => clean,
        NoiseModel::Poisson { level } => {
            let s = level * level;
            let data = clean
                .as_slice()
                .iter()
                .map(|&mu| {
                    if mu <= 0.0 {
                        0.0
                    } else {
                        let d = Poisson::new(mu / s).expect("positive mean");
                        s * d.sample(&mut rng)
                    }
                })
                .collect();
            DenseTensor3::from_vec(clean.shape(), data)?
        }
        NoiseModel::Gaussian { sigma } => {
            let data = clean
                .as_slice()
                .iter()
                .map(|&mu| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mu + sigma * z).max(0.0)
                })
                .collect();
            DenseTensor3::from_vec(clean.shape(), data)?
        }
    };

    Ok(SyntheticData {
        tensor,
        truth,
        demographics,
        labels,
        user_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_equals_reconstruction() {
        let mut spec = SyntheticSpec::three_patterns(30, 6, 1);
        spec.noise = NoiseModel::Poisson { level: 0.0 };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.tensor, reconstruct(&d.truth).unwrap());
    }

    #[test]
    fn weekday_template_mass() {
        let p = DayTemplate::Weekday.profile().unwrap();
        let weekday: f64 = p[..5].iter().sum();
        assert!(weekday / p.iter().sum::<f64>() >= 0.9);
        let sat = DayTemplate::SaturdayPeak.profile().unwrap();
        assert_eq!(sat.iter().cloned().fold(0.0, f64::max), sat[5]);
    }

    #[test]
    fn deterministic_for_seed() {
        let mut spec = SyntheticSpec::three_patterns(40, 8, 9);
        spec.noise = NoiseModel::Poisson { level: 1.0 };
        let (x, y) = (generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        assert_eq!(x.tensor, y.tensor);
        assert_eq!(x.truth, y.truth);
        assert_eq!(x.demographics, y.demographics);
        spec.seed = 10;
        assert_ne!(generate_synthetic(&spec).unwrap().tensor, x.tensor);
    }

    #[test]
    fn poisson_unit_level_gives_counts() {
        let mut spec = SyntheticSpec::three_patterns(20, 4, 3);
        spec.noise = NoiseModel::Poisson { level: 1.0 };
        let d = generate_synthetic(&spec).unwrap();
        assert!(d.tensor.as_slice().iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn group_sizes_sum_to_users() {
        let spec = SyntheticSpec::three_patterns(13, 4, 3);
        let sizes = spec.group_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 13);
        assert_eq!(sizes, vec![3, 3, 3, 2, 2]);
    }

    #[test]
    fn rejects_duplicate_templates() {
        let mut spec = SyntheticSpec::three_patterns(10, 4, 3);
        spec.components[1].day = DayTemplate::Weekday;
        assert!(generate_synthetic(&spec).is_err());
    }
}
