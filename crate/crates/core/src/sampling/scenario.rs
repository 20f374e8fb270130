//! Geometric scenarios: which points are inside the domain for a given
//! parameter value, and how moving boundary points follow the parameter.

use serde::{Deserialize, Serialize};

use super::SamplingError;

/// Declarative predicate over `(x, k)` with `x` in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    All,
    Nothing,
    /// `normal . x <= offset + k_coef * k`.
    HalfSpace {
        normal: [f64; 3],
        offset: f64,
        #[serde(default)]
        k_coef: f64,
    },
    /// Open ball `|mask * (x - center - k * k_dir)| < radius`; a zero mask
    /// entry turns the ball into a cylinder along that axis.
    Ball {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        k_dir: [f64; 3],
        #[serde(default = "unit_mask")]
        mask: [f64; 3],
    },
    Not {
        region: Box<Region>,
    },
    And {
        regions: Vec<Region>,
    },
    Or {
        regions: Vec<Region>,
    },
}

fn unit_mask() -> [f64; 3] {
    [1.0; 3]
}

impl Region {
    pub fn contains(&self, x: &[f64; 3], k: f64) -> bool {
        match self {
            Region::All => true,
            Region::Nothing => false,
            Region::HalfSpace { normal, offset, k_coef } => {
                let d: f64 = normal.iter().zip(x).map(|(n, c)| n * c).sum();
                d <= offset + k_coef * k
            }
            Region::Ball { center, radius, k_dir, mask } => {
                let r2: f64 = (0..3)
                    .map(|i| {
                        let d = mask[i] * (x[i] - center[i] - k * k_dir[i]);
                        d * d
                    })
                    .sum();
                r2.sqrt() < *radius
            }
            Region::Not { region } => !region.contains(x, k),
            Region::And { regions } => regions.iter().all(|r| r.contains(x, k)),
            Region::Or { regions } => regions.iter().any(|r| r.contains(x, k)),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Region::All | Region::Nothing => Ok(()),
            Region::HalfSpace { normal, offset, k_coef } => {
                if finite(normal) && offset.is_finite() && k_coef.is_finite() {
                    Ok(())
                } else {
                    Err("half-space coefficients must be finite".into())
                }
            }
            Region::Ball { center, radius, k_dir, mask } => {
                if finite(center) && finite(k_dir) && finite(mask) && *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err("ball needs finite center/direction and a positive radius".into())
                }
            }
            Region::Not { region } => region.validate(),
            Region::And { regions } | Region::Or { regions } => regions.iter().try_for_each(Region::validate),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    fn unit(self) -> [f64; 3] {
        let mut u = [0.0; 3];
        u[self.index()] = 1.0;
        u
    }
}

/// Scenario as written in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[derive(Default)]
pub enum ScenarioConfig {
    #[default]
    Static,
    /// A circular cylinder translated along `shift` by `k`.
    CylinderTranslate {
        #[serde(default = "cyl_k_range")]
        k_range: [f64; 2],
        #[serde(default = "cyl_diameter")]
        diameter: f64,
        #[serde(default)]
        axis: Axis,
        #[serde(default = "y_axis")]
        shift: Axis,
        #[serde(default)]
        center: [f64; 3],
    },
    /// A junction arm whose height is `k`.
    TjunctionHeight {
        #[serde(default = "tj_k_range")]
        k_range: [f64; 2],
        #[serde(default = "tj_l_in")]
        l_in: f64,
        #[serde(default = "tj_h")]
        h: f64,
        #[serde(default = "tj_k_ref")]
        k_ref: f64,
    },
    Custom {
        name: String,
        k_range: [f64; 2],
        k_ref: f64,
        inside_fdn: Region,
        inside_m: Region,
        shift: [f64; 3],
    },
}

fn cyl_k_range() -> [f64; 2] {
    [-0.05, 0.05]
}
fn cyl_diameter() -> f64 {
    0.1
}
fn y_axis() -> Axis {
    Axis::Y
}
fn tj_k_range() -> [f64; 2] {
    [0.03, 0.07]
}
fn tj_l_in() -> f64 {
    0.09
}
fn tj_h() -> f64 {
    0.2
}
fn tj_k_ref() -> f64 {
    0.03
}


/// Resolved scenario: predicates plus the moving-boundary transform
/// `x + shift * (k - k_ref)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub k_range: [f64; 2],
    pub k_ref: f64,
    pub inside_fdn: Region,
    pub inside_m: Region,
    pub shift: [f64; 3],
    pub parametric: bool,
}

impl ScenarioSpec {
    pub fn static_scenario() -> Self {
        Self {
            name: "static".into(),
            k_range: [0.0, 0.0],
            k_ref: 0.0,
            inside_fdn: Region::All,
            inside_m: Region::All,
            shift: [0.0; 3],
            parametric: false,
        }
    }

    pub fn cylinder_translate(k_range: [f64; 2], diameter: f64, axis: Axis, shift: Axis, center: [f64; 3]) -> Self {
        let mut mask = [1.0; 3];
        mask[axis.index()] = 0.0;
        let cylinder = Region::Ball { center, radius: 0.5 * diameter, k_dir: shift.unit(), mask };
        Self {
            name: "cylinder-translate".into(),
            k_range,
            k_ref: 0.0,
            inside_fdn: Region::Not { region: Box::new(cylinder) },
            inside_m: Region::All,
            shift: shift.unit(),
            parametric: true,
        }
    }

    pub fn tjunction_height(k_range: [f64; 2], l_in: f64, h: f64, k_ref: f64) -> Self {
        let below_arm_top = Region::HalfSpace { normal: [0.0, 1.0, 0.0], offset: 0.0, k_coef: 1.0 };
        let right_of_inlet_wall = Region::HalfSpace { normal: [-1.0, 0.0, 0.0], offset: 0.5 * l_in, k_coef: 0.0 };
        Self {
            name: "tjunction-height".into(),
            k_range,
            k_ref,
            inside_fdn: Region::Or { regions: vec![below_arm_top, right_of_inlet_wall] },
            inside_m: Region::HalfSpace { normal: [0.0, 1.0, 0.0], offset: h, k_coef: 0.0 },
            shift: [0.0, 1.0, 0.0],
            parametric: true,
        }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, SamplingError> {
        let spec = match cfg {
            ScenarioConfig::Static => Self::static_scenario(),
            ScenarioConfig::CylinderTranslate { k_range, diameter, axis, shift, center } => {
                if axis == shift {
                    return Err(SamplingError::Scenario("cylinder shift must not be along its axis".into()));
                }
                Self::cylinder_translate(*k_range, *diameter, *axis, *shift, *center)
            }
            ScenarioConfig::TjunctionHeight { k_range, l_in, h, k_ref } => Self::tjunction_height(*k_range, *l_in, *h, *k_ref),
            ScenarioConfig::Custom { name, k_range, k_ref, inside_fdn, inside_m, shift } => Self {
                name: name.clone(),
                k_range: *k_range,
                k_ref: *k_ref,
                inside_fdn: inside_fdn.clone(),
                inside_m: inside_m.clone(),
                shift: *shift,
                parametric: true,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let [lo, hi] = self.k_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SamplingError::Scenario(format!("k range [{lo}, {hi}] is not a finite interval")));
        }
        if !self.k_ref.is_finite() || !self.shift.iter().all(|v| v.is_finite()) {
            return Err(SamplingError::Scenario("reference k and shift must be finite".into()));
        }
        self.inside_fdn.validate().map_err(SamplingError::Scenario)?;
        self.inside_m.validate().map_err(SamplingError::Scenario)
    }

    pub fn transform(&self, x: &[f64; 3], k: f64) -> [f64; 3] {
        let dk = k - self.k_ref;
        if dk == 0.0 {
            return *x;
        }
        std::array::from_fn(|i| x[i] + self.shift[i] * dk)
    }

    pub fn inside_fdn(&self, x: &[f64; 3], k: f64) -> bool {
        self.inside_fdn.contains(x, k)
    }

    pub fn inside_m(&self, x: &[f64; 3], k: f64) -> bool {
        self.inside_m.contains(x, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cylinder() -> ScenarioSpec {
        ScenarioSpec::from_config(&ScenarioConfig::CylinderTranslate {
            k_range: cyl_k_range(),
            diameter: 0.1,
            axis: Axis::Z,
            shift: Axis::Y,
            center: [0.0; 3],
        })
        .unwrap()
    }

    fn tjunction() -> ScenarioSpec {
        ScenarioSpec::tjunction_height(tj_k_range(), 0.09, 0.2, 0.03)
    }

    #[test]
    fn cylinder_predicate_cases() {
        let s = cylinder();
        let x = [0.0, 0.04, 0.2];
        assert!(!s.inside_fdn(&x, 0.0));
        assert!(s.inside_fdn(&x, -0.05));
        // on the surface counts as inside the fluid
        assert!(s.inside_fdn(&[0.05, 0.0, 0.1], 0.0));
        assert!(s.inside_m(&[123.0, -4.0, 9.0], 0.01));
    }

    #[test]
    fn cylinder_transform_shifts_y() {
        let s = cylinder();
        let x = [0.3, -0.02, 0.1];
        assert_eq!(s.transform(&x, 0.03), [0.3, -0.02 + 0.03, 0.1]);
        assert_eq!(s.transform(&x, 0.0), x);
    }

    #[test]
    fn tjunction_predicate_cases() {
        let s = tjunction();
        let x = [-0.1, 0.05, 0.0];
        assert!(!s.inside_fdn(&x, 0.03));
        assert!(s.inside_fdn(&x, 0.07));
        assert!(s.inside_fdn(&[-0.045, 0.15, 0.0], 0.03));
        assert!(s.inside_fdn(&[0.1, 0.15, 0.0], 0.03));
        assert!(s.inside_m(&[0.0, 0.2, 0.0], 0.05));
        assert!(!s.inside_m(&[0.0, 0.2001, 0.0], 0.05));
    }

    #[test]
    fn tjunction_transform_is_relative_to_reference() {
        let s = tjunction();
        let x = [-0.1, 0.03, 0.05];
        assert_eq!(s.transform(&x, 0.03), x);
        let moved = s.transform(&x, 0.07);
        assert!((moved[1] - 0.07).abs() < 1e-15);
    }

    #[test]
    fn static_is_identity() {
        let s = ScenarioSpec::static_scenario();
        assert!(!s.parametric);
        assert_eq!(s.transform(&[1.0, 2.0, 3.0], 0.0), [1.0, 2.0, 3.0]);
        assert!(s.inside_fdn(&[1e9, -1e9, 0.0], 0.0));
    }

    #[test]
    fn bad_configs_rejected() {
        let bad = ScenarioConfig::Custom {
            name: "x".into(),
            k_range: [1.0, 0.0],
            k_ref: 0.0,
            inside_fdn: Region::All,
            inside_m: Region::All,
            shift: [0.0; 3],
        };
        assert!(ScenarioSpec::from_config(&bad).is_err());
        let bad = ScenarioConfig::CylinderTranslate {
            k_range: [0.0, 0.1],
            diameter: 0.1,
            axis: Axis::Y,
            shift: Axis::Y,
            center: [0.0; 3],
        };
        assert!(ScenarioSpec::from_config(&bad).is_err());
    }

    #[test]
    fn region_algebra_from_json() {
        let r: Region = serde_json::from_str(
            r#"{"kind":"and","regions":[{"kind":"half-space","normal":[1,0,0],"offset":1.0},
                {"kind":"not","region":{"kind":"ball","center":[0,0,0],"radius":0.5}}]}"#,
        )
        .unwrap();
        assert!(r.contains(&[0.8, 0.0, 0.0], 0.0));
        assert!(!r.contains(&[0.2, 0.0, 0.0], 0.0));
        assert!(!r.contains(&[1.2, 0.0, 0.0], 0.0));
    }
}
