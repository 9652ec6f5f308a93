//! Declarative serial-chain description: screw axes in the base frame, home
//! pose, joint limits and named link lengths.
//!
//! Model files are JSON in millimeters and degrees; everything in memory is
//! meters and radians.

use std::fmt;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::{is_rotation, RigidTransform, ScrewAxis};

/// Named link lengths of the default manipulator, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkDimensions {
    pub d_bc: f64,
    pub d_cd: f64,
    pub d_de: f64,
    pub d_eg: f64,
    pub d_gf: f64,
}

impl LinkDimensions {
    /// Manufacturer figures for the KUKA LBR iiwa 14, converted to meters.
    pub fn iiwa14() -> Self {
        Self {
            d_bc: 0.340,
            d_cd: 0.740,
            d_de: 0.400,
            d_eg: 0.126,
            d_gf: 0.126,
        }
    }

    /// Wrist-to-flange distance; the frames chain e → g → f.
    pub fn d_ef(&self) -> f64 {
        self.d_eg + self.d_gf
    }

    /// Base-to-end-effector distance `D = d_bc + d_cd + d_de + d_ef`.
    pub fn base_to_ee(&self) -> f64 {
        self.d_bc + self.d_cd + self.d_de + self.d_ef()
    }

    /// Sum of every listed segment from base to end effector.
    pub fn segment_sum(&self) -> f64 {
        self.d_bc + self.d_cd + self.d_de + self.d_eg + self.d_gf
    }

    fn as_array(&self) -> [(&'static str, f64); 5] {
        [
            ("d_bc", self.d_bc),
            ("d_cd", self.d_cd),
            ("d_de", self.d_de),
            ("d_eg", self.d_eg),
            ("d_gf", self.d_gf),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub screw: ScrewAxis,
    /// Radians (meters for prismatic joints).
    pub lower: f64,
    pub upper: f64,
    /// Radians per second.
    pub max_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub home: RigidTransform,
    pub links: LinkDimensions,
}

/// A single rule violation found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based joint index, when the rule is joint-specific.
    pub joint: Option<usize>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.joint {
            Some(j) => write!(f, "{} joint={}", self.rule, j)?,
            None => write!(f, "{}", self.rule)?,
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("model validation failed: {}", join_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    /// Middle of every joint range.
    pub fn mid_posture(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().map(|j| 0.5 * (j.lower + j.upper)),
        )
    }

    pub fn within_limits(&self, q: &DVector<f64>) -> bool {
        q.len() == self.dof()
            && q
                .iter()
                .zip(&self.joints)
                .all(|(x, j)| *x >= j.lower && *x <= j.upper)
    }

    /// Project `q` onto the joint-limit box.
    pub fn clamp_to_limits(&self, q: &mut DVector<f64>) {
        for (x, j) in q.iter_mut().zip(&self.joints) {
            *x = x.clamp(j.lower, j.upper);
        }
    }
}

/// Every rule violation in `model`, ordered by joint index.
pub fn validate_model(model: &RobotModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if model.joints.is_empty() {
        out.push(Diagnostic {
            joint: None,
            rule: "no-joints",
            detail: String::new(),
        });
    }
    for (i, j) in model.joints.iter().enumerate() {
        let idx = Some(i + 1);
        if let Err(e) = j.screw.validate() {
            out.push(Diagnostic {
                joint: idx,
                rule: "screw-axis",
                detail: e.to_string(),
            });
        }
        if !(j.lower.is_finite() && j.upper.is_finite()) {
            out.push(Diagnostic {
                joint: idx,
                rule: "limit-finite",
                detail: String::new(),
            });
        } else if j.lower >= j.upper {
            out.push(Diagnostic {
                joint: idx,
                rule: "limit-order",
                detail: format!("lower {} >= upper {}", j.lower, j.upper),
            });
        }
        if let Some(s) = j.max_speed {
            if !(s > 0.0 && s.is_finite()) {
                out.push(Diagnostic {
                    joint: idx,
                    rule: "max-speed",
                    detail: format!("{s}"),
                });
            }
        }
    }
    if !is_rotation(&model.home.rotation, 1e-9)
        || !model.home.translation.iter().all(|x| x.is_finite())
    {
        out.push(Diagnostic {
            joint: None,
            rule: "home-transform",
            detail: String::new(),
        });
    }
    for (name, len) in model.links.as_array() {
        if !(len > 0.0 && len.is_finite()) {
            out.push(Diagnostic {
                joint: None,
                rule: "link-length",
                detail: format!("{name} = {len}"),
            });
        }
    }
    out
}

/// Built-in KUKA LBR iiwa 14 model: seven zero-pitch revolute joints with
/// base-frame axes alternating z, y, z, y, z, y, z and the end effector at
/// `(0, 0, D)` in the zero configuration.
pub fn default_iiwa14() -> RobotModel {
    let links = LinkDimensions::iiwa14();
    let shoulder = links.d_bc;
    let elbow = shoulder + links.d_cd;
    let wrist = elbow + links.d_de;
    let heights = [0.0, shoulder, shoulder, elbow, elbow, wrist, wrist];
    let limits_deg = [170.0, 120.0, 170.0, 120.0, 170.0, 120.0, 175.0];
    let speeds_deg = [85.0, 85.0, 100.0, 75.0, 130.0, 135.0, 135.0];
    let joints = (0..7)
        .map(|i| {
            let omega = if i % 2 == 0 { Vector3::z() } else { Vector3::y() };
            let screw = ScrewAxis::revolute(omega, Vector3::new(0.0, 0.0, heights[i]))
                .expect("unit axis");
            let lim = f64::to_radians(limits_deg[i]);
            JointSpec {
                screw,
                lower: -lim,
                upper: lim,
                max_speed: Some(f64::to_radians(speeds_deg[i])),
            }
        })
        .collect();
    RobotModel {
        name: "kuka-iiwa14".to_string(),
        joints,
        home: RigidTransform::from_translation(Vector3::new(0.0, 0.0, links.base_to_ee())),
        links,
    }
}

// ---- file format ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    dof: usize,
    joints: Vec<JointDoc>,
    home: HomeDoc,
    links_mm: LinksDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    omega: [f64; 3],
    /// Point on the axis, millimeters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<[f64; 3]>,
    /// Linear part; millimeters for revolute joints, a unit direction for
    /// prismatic ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<[f64; 3]>,
    limits_deg: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_speed_deg_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HomeDoc {
    translation_mm: [f64; 3],
    rotation: RotationDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RotationDoc {
    Named(String),
    Rows([[f64; 3]; 3]),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinksDoc {
    d_bc: f64,
    d_cd: f64,
    d_de: f64,
    d_eg: f64,
    d_gf: f64,
}

fn mm(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0] / 1000.0, v[1] / 1000.0, v[2] / 1000.0)
}

fn to_mm(v: &Vector3<f64>) -> [f64; 3] {
    [v.x * 1000.0, v.y * 1000.0, v.z * 1000.0]
}

/// Parse and validate a JSON model document.
pub fn load_model(document: &str) -> Result<RobotModel, ModelError> {
    let doc: ModelDoc =
        serde_json::from_str(document).map_err(|e| ModelError::Parse(e.to_string()))?;
    let mut diags = Vec::new();
    if doc.joints.len() != doc.dof {
        diags.push(Diagnostic {
            joint: None,
            rule: "dof-mismatch",
            detail: format!("declared {} joints, found {}", doc.dof, doc.joints.len()),
        });
    }
    let mut joints = Vec::with_capacity(doc.joints.len());
    for (i, j) in doc.joints.iter().enumerate() {
        let omega = Vector3::from(j.omega);
        let v = match (j.point, j.v) {
            (Some(p), None) => -omega.cross(&mm(p)),
            (None, Some(v)) if omega.norm() == 0.0 => Vector3::from(v),
            (None, Some(v)) => mm(v),
            _ => {
                diags.push(Diagnostic {
                    joint: Some(i + 1),
                    rule: "axis-spec",
                    detail: "exactly one of \"point\" or \"v\" is required".into(),
                });
                Vector3::zeros()
            }
        };
        joints.push(JointSpec {
            screw: ScrewAxis { omega, v },
            lower: j.limits_deg[0].to_radians(),
            upper: j.limits_deg[1].to_radians(),
            max_speed: j.max_speed_deg_s.map(f64::to_radians),
        });
    }
    let rotation = match &doc.home.rotation {
        RotationDoc::Named(s) if s == "identity" => Matrix3::identity(),
        RotationDoc::Named(s) => {
            return Err(ModelError::Parse(format!("unknown home rotation \"{s}\"")));
        }
        RotationDoc::Rows(r) => Matrix3::from_row_slice(&r.concat()),
    };
    let model = RobotModel {
        name: doc.name,
        joints,
        home: RigidTransform::new(rotation, mm(doc.home.translation_mm)),
        links: LinkDimensions {
            d_bc: doc.links_mm.d_bc / 1000.0,
            d_cd: doc.links_mm.d_cd / 1000.0,
            d_de: doc.links_mm.d_de / 1000.0,
            d_eg: doc.links_mm.d_eg / 1000.0,
            d_gf: doc.links_mm.d_gf / 1000.0,
        },
    };
    diags.extend(validate_model(&model));
    if diags.is_empty() {
        Ok(model)
    } else {
        diags.sort_by_key(|d| d.joint.unwrap_or(0));
        Err(ModelError::Validation(diags))
    }
}

/// Serialize to the JSON model format (millimeters, degrees).
pub fn save_model(model: &RobotModel) -> String {
    let rotation = if model.home.rotation == Matrix3::identity() {
        RotationDoc::Named("identity".into())
    } else {
        let r = &model.home.rotation;
        RotationDoc::Rows([
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ])
    };
    let l = &model.links;
    let doc = ModelDoc {
        name: model.name.clone(),
        dof: model.dof(),
        joints: model
            .joints
            .iter()
            .map(|j| JointDoc {
                omega: j.screw.omega.into(),
                point: None,
                v: Some(if j.screw.is_prismatic() {
                    j.screw.v.into()
                } else {
                    to_mm(&j.screw.v)
                }),
                limits_deg: [j.lower.to_degrees(), j.upper.to_degrees()],
                max_speed_deg_s: j.max_speed.map(f64::to_degrees),
            })
            .collect(),
        home: HomeDoc {
            translation_mm: to_mm(&model.home.translation),
            rotation,
        },
        links_mm: LinksDoc {
            d_bc: l.d_bc * 1000.0,
            d_cd: l.d_cd * 1000.0,
            d_de: l.d_de * 1000.0,
            d_eg: l.d_eg * 1000.0,
            d_gf: l.d_gf * 1000.0,
        },
        notes: None,
    };
    serde_json::to_string_pretty(&doc).expect("model serializes")
}

/// The model document shipped with the crate.
pub const IIWA14_DOCUMENT: &str = include_str!("../models/iiwa14.json");

/// Resolve a CLI-style model reference: `iiwa14` or a path to a JSON file.
pub fn resolve_model(reference: &str) -> Result<RobotModel, ModelError> {
    if reference == "iiwa14" || reference == "builtin:iiwa14" {
        return Ok(default_iiwa14());
    }
    let text = std::fs::read_to_string(reference)
        .map_err(|e| ModelError::Parse(format!("{reference}: {e}")))?;
    load_model(&text)
}
