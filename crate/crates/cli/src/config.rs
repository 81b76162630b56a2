//! Experiment configuration: a TOML document with `[grid]`, `[geometry]`,
//! `[scheme]`, `[initial]`, `[run]` and `[output]` sections.

use serde::{Deserialize, Serialize};

use ebsrd_core::geometry::{GeometryOptions, ImplicitFn, Vec3};
use ebsrd_core::mesh::{Boundary, GridSpec};
use ebsrd_core::solver::{Limiter, SchemeConfig, Stabilizer, TimeIntegrator};
use ebsrd_core::srd::{HaloWidths, MergeStrategy, SrdOptions, StencilGrowth, Variant};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub ndim: usize,
    pub cells: Vec<usize>,
    /// Cell widths; a single entry applies to every axis.
    pub spacing: Vec<f64>,
    #[serde(default)]
    pub origin: Vec<f64>,
    /// Low and high side per axis: `periodic`, `outflow` or `inflow:<value>`.
    pub boundary: Vec<String>,
    #[serde(default = "default_kappa_min")]
    pub kappa_min: f64,
    #[serde(default = "default_depth")]
    pub subdivision_depth: u32,
}

fn default_kappa_min() -> f64 {
    GeometryOptions::default().kappa_min
}

fn default_depth() -> u32 {
    GeometryOptions::default().subdivision_depth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryConfig {
    #[default]
    None,
    /// Body below a straight wall through `anchor` rising at `angle_deg`,
    /// raised by `offset_cells` cell heights.
    Ramp {
        angle_deg: f64,
        #[serde(default = "default_anchor")]
        anchor: [f64; 2],
        #[serde(default)]
        offset_cells: f64,
    },
    Csg {
        shape: Shape,
    },
}

fn default_anchor() -> [f64; 2] {
    [0.0, 0.0]
}

/// Constructive solid geometry tree; the body is where the function is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Sphere { center: Vec<f64>, radius: f64 },
    Cylinder { axis: usize, center: Vec<f64>, radius: f64 },
    Cuboid { lo: Vec<f64>, hi: Vec<f64> },
    Union { a: Box<Shape>, b: Box<Shape> },
    Intersection { a: Box<Shape>, b: Box<Shape> },
    Difference { a: Box<Shape>, b: Box<Shape> },
    Translate { shift: Vec<f64>, of: Box<Shape> },
    Rotate { axis: usize, degrees: f64, of: Box<Shape> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StabilizerName {
    None,
    Frd,
    SrdOriginal,
    #[default]
    SrdWeighted,
}

impl StabilizerName {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => StabilizerName::None,
            "frd" => StabilizerName::Frd,
            "srd-original" => StabilizerName::SrdOriginal,
            "srd-weighted" => StabilizerName::SrdWeighted,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StabilizerName::None => "none",
            StabilizerName::Frd => "frd",
            StabilizerName::SrdOriginal => "srd-original",
            StabilizerName::SrdWeighted => "srd-weighted",
        }
    }

    fn to_core(self) -> Stabilizer {
        match self {
            StabilizerName::None => Stabilizer::None,
            StabilizerName::Frd => Stabilizer::Frd,
            StabilizerName::SrdOriginal => Stabilizer::SrdOriginal,
            StabilizerName::SrdWeighted => Stabilizer::SrdWeighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LimiterName {
    Off,
    FirstOrder,
    Minmod,
    VanLeer,
    #[default]
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RkName {
    Euler,
    #[default]
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MergeName {
    /// Grow along the boundary normal.
    #[default]
    Normal,
    Horizontal,
    Vertical,
    /// Always merge the whole 3^d block.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthName {
    #[default]
    Distance,
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    /// Constant velocity; mutually exclusive with `speed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    /// Speed along a ramp wall, pointing up the slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default)]
    pub diffusivity: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub stabilizer: StabilizerName,
    #[serde(default)]
    pub limiter: LimiterName,
    /// Face states at the half time level.
    #[serde(default)]
    pub time_centered: bool,
    #[serde(default)]
    pub rk: RkName,
    #[serde(default)]
    pub merge: MergeName,
    #[serde(default = "default_target")]
    pub target_fraction: f64,
    #[serde(default = "yes")]
    pub srd_slopes: bool,
    #[serde(default = "yes")]
    pub srd_limit: bool,
    #[serde(default)]
    pub growth: GrowthName,
    #[serde(default = "default_pre")]
    pub halo_pre: usize,
    #[serde(default = "default_post")]
    pub halo_post: usize,
}

fn default_cfl() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn default_target() -> f64 {
    SrdOptions::default().target_fraction
}

fn default_pre() -> usize {
    HaloWidths::default().pre
}

fn default_post() -> usize {
    HaloWidths::default().post
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            velocity: None,
            speed: None,
            diffusivity: 0.0,
            cfl: default_cfl(),
            stabilizer: StabilizerName::default(),
            limiter: LimiterName::default(),
            time_centered: false,
            rk: RkName::default(),
            merge: MergeName::default(),
            target_fraction: default_target(),
            srd_slopes: true,
            srd_limit: true,
            growth: GrowthName::default(),
            halo_pre: default_pre(),
            halo_post: default_post(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant {
        value: f64,
    },
    /// `high` behind the plane through `position` normal to `direction`, `low` ahead.
    /// The direction defaults to the flow direction.
    Heaviside {
        position: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
        #[serde(default = "one")]
        high: f64,
        #[serde(default)]
        low: f64,
    },
    /// Gaussian bump; one-dimensional along `direction` when given, radial otherwise.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
        #[serde(default)]
        base: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Linear {
        gradient: Vec<f64>,
        #[serde(default)]
        value: f64,
    },
    /// Independent uniform values drawn from a seeded generator.
    Random {
        seed: u64,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
    #[serde(default = "one_patch")]
    pub patches: usize,
    /// Redistribute the initial data before the first step.
    #[serde(default)]
    pub redistribute_initial: bool,
}

fn one_patch() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { steps: Some(0), end_time: None, patches: 1, redistribute_initial: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub field: bool,
    #[serde(default)]
    pub profile: bool,
    #[serde(default)]
    pub plan: bool,
    #[serde(default)]
    pub matrix: bool,
    #[serde(default)]
    pub ebgrid: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { field: true, profile: false, plan: false, matrix: false, ebgrid: false }
    }
}

fn vec3(v: &[f64], what: &str, fill: f64) -> Result<Vec3, CliError> {
    if v.is_empty() || v.len() > 3 {
        return Err(CliError::Config(format!("{what}: expected 1 to 3 components, got {}", v.len())));
    }
    let mut out = [fill; 3];
    out[..v.len()].copy_from_slice(v);
    Ok(out)
}

fn parse_boundary(s: &str) -> Result<Boundary, CliError> {
    match s.trim() {
        "periodic" => Ok(Boundary::Periodic),
        "outflow" => Ok(Boundary::Outflow),
        other => {
            let value = other
                .strip_prefix("inflow:")
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("grid.boundary: unknown condition `{other}`")))?;
            Ok(Boundary::Inflow(value))
        }
    }
}

impl Shape {
    pub fn build(&self) -> Result<ImplicitFn, CliError> {
        Ok(match self {
            Shape::HalfSpace { normal, offset } => ImplicitFn::half_space(vec3(normal, "half-space normal", 0.0)?, *offset),
            Shape::Sphere { center, radius } => ImplicitFn::sphere(vec3(center, "sphere center", 0.0)?, *radius),
            Shape::Cylinder { axis, center, radius } => {
                if *axis > 2 {
                    return Err(CliError::Config("cylinder axis must be 0, 1 or 2".into()));
                }
                ImplicitFn::cylinder(*axis, vec3(center, "cylinder center", 0.0)?, *radius)
            }
            Shape::Cuboid { lo, hi } => ImplicitFn::cuboid(
                vec3(lo, "cuboid lo", f64::NEG_INFINITY)?,
                vec3(hi, "cuboid hi", f64::INFINITY)?,
            ),
            Shape::Union { a, b } => ImplicitFn::union(a.build()?, b.build()?),
            Shape::Intersection { a, b } => ImplicitFn::intersection(a.build()?, b.build()?),
            Shape::Difference { a, b } => ImplicitFn::difference(a.build()?, b.build()?),
            Shape::Translate { shift, of } => of.build()?.translate(vec3(shift, "translate shift", 0.0)?),
            Shape::Rotate { axis, degrees, of } => {
                if *axis > 2 {
                    return Err(CliError::Config("rotation axis must be 0, 1 or 2".into()));
                }
                of.build()?.rotate(*axis, degrees.to_radians())
            }
        })
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let spec = self.grid_spec()?;
        spec.validate().map_err(|e| CliError::Config(format!("grid: {e}")))?;
        self.geometry()?;
        let s = &self.scheme;
        if s.velocity.is_some() == s.speed.is_some() {
            return Err(CliError::Config("scheme: give exactly one of `velocity` and `speed`".into()));
        }
        if s.speed.is_some() && !matches!(self.geometry, GeometryConfig::Ramp { .. }) {
            return Err(CliError::Config("scheme.speed needs a ramp geometry".into()));
        }
        if !(s.target_fraction > 0.0 && s.target_fraction <= 1.0) {
            return Err(CliError::Config("scheme.target_fraction must lie in (0, 1]".into()));
        }
        self.scheme_config()?.time_step(&spec).map_err(|e| CliError::Config(format!("scheme: {e}")))?;
        if self.run.steps.is_some() == self.run.end_time.is_some() {
            return Err(CliError::Config("run: give exactly one of `steps` and `end_time`".into()));
        }
        if self.run.patches == 0 {
            return Err(CliError::Config("run.patches must be positive".into()));
        }
        match &self.initial {
            InitialConfig::Gaussian { width, .. } if !(*width > 0.0) => {
                Err(CliError::Config("initial.width must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        let g = &self.grid;
        let n = g.ndim;
        if n != 2 && n != 3 {
            return Err(CliError::Config("grid.ndim must be 2 or 3".into()));
        }
        if g.cells.len() != n {
            return Err(CliError::Config(format!("grid.cells: expected {n} entries")));
        }
        let mut cells = [1; 3];
        cells[..n].copy_from_slice(&g.cells);
        let mut spacing = [1.0; 3];
        match g.spacing.len() {
            1 => spacing[..n].fill(g.spacing[0]),
            m if m == n => spacing[..n].copy_from_slice(&g.spacing),
            _ => return Err(CliError::Config(format!("grid.spacing: expected 1 or {n} entries"))),
        }
        let mut origin = [0.0; 3];
        match g.origin.len() {
            0 => {}
            m if m == n => origin[..n].copy_from_slice(&g.origin),
            _ => return Err(CliError::Config(format!("grid.origin: expected {n} entries"))),
        }
        if g.boundary.len() != 2 * n {
            return Err(CliError::Config(format!("grid.boundary: expected {} entries, low then high per axis", 2 * n)));
        }
        let mut spec = GridSpec::new(n, cells, spacing, origin, Boundary::Outflow);
        for d in 0..n {
            spec = spec.with_boundary(d, parse_boundary(&g.boundary[2 * d])?, parse_boundary(&g.boundary[2 * d + 1])?);
        }
        Ok(spec)
    }

    pub fn geometry_options(&self) -> GeometryOptions {
        GeometryOptions { subdivision_depth: self.grid.subdivision_depth, kappa_min: self.grid.kappa_min }
    }

    pub fn geometry(&self) -> Result<ImplicitFn, CliError> {
        Ok(match &self.geometry {
            GeometryConfig::None => ImplicitFn::Constant(-1.0),
            GeometryConfig::Ramp { angle_deg, anchor, offset_cells } => {
                if !(*angle_deg > -90.0 && *angle_deg < 90.0) {
                    return Err(CliError::Config("geometry.angle_deg must lie in (-90, 90)".into()));
                }
                let h = self.grid.spacing.get(1).or(self.grid.spacing.first()).copied().unwrap_or(1.0);
                ImplicitFn::ramp(*angle_deg, [anchor[0], anchor[1] + offset_cells * h])
            }
            GeometryConfig::Csg { shape } => shape.build()?,
        })
    }

    /// Unit vector up a ramp wall, if the geometry is a ramp.
    pub fn wall_direction(&self) -> Option<Vec3> {
        match self.geometry {
            GeometryConfig::Ramp { angle_deg, .. } => {
                let t = angle_deg.to_radians();
                Some(if angle_deg == 45.0 {
                    [std::f64::consts::FRAC_1_SQRT_2; 2]
                } else {
                    [t.cos(), t.sin()]
                })
                .map(|[c, s]| [c, s, 0.0])
            }
            _ => None,
        }
    }

    pub fn velocity(&self) -> Result<Vec3, CliError> {
        match (&self.scheme.velocity, self.scheme.speed) {
            (Some(v), _) => vec3(v, "scheme.velocity", 0.0),
            (None, Some(s)) => {
                let t = self
                    .wall_direction()
                    .ok_or_else(|| CliError::Config("scheme.speed needs a ramp geometry".into()))?;
                Ok([s * t[0], s * t[1], 0.0])
            }
            (None, None) => Err(CliError::Config("scheme: missing velocity".into())),
        }
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig, CliError> {
        let s = &self.scheme;
        let merge = match s.merge {
            MergeName::Normal => MergeStrategy::Normal,
            MergeName::Horizontal => MergeStrategy::Axis(0),
            MergeName::Vertical => MergeStrategy::Axis(1),
            MergeName::Central => MergeStrategy::Central,
        };
        let growth = match s.growth {
            GrowthName::Distance => StencilGrowth::Distance,
            GrowthName::Spread => StencilGrowth::Spread,
        };
        let variant = match s.stabilizer {
            StabilizerName::SrdOriginal => Variant::Original,
            _ => Variant::Weighted,
        };
        Ok(SchemeConfig {
            velocity: self.velocity()?,
            diffusivity: s.diffusivity,
            cfl: s.cfl,
            stabilizer: s.stabilizer.to_core(),
            limiter: match s.limiter {
                LimiterName::Off => Limiter::Off,
                LimiterName::FirstOrder => Limiter::FirstOrder,
                LimiterName::Minmod => Limiter::MinMod,
                LimiterName::VanLeer => Limiter::VanLeer,
                LimiterName::Mc => Limiter::MonotonizedCentral,
            },
            time_centered: s.time_centered,
            integrator: match s.rk {
                RkName::Euler => TimeIntegrator::ForwardEuler,
                RkName::Heun => TimeIntegrator::Heun,
            },
            srd: SrdOptions {
                variant,
                target_fraction: s.target_fraction,
                merge,
                slopes: s.srd_slopes,
                limit: s.srd_limit,
                growth,
                ..SrdOptions::default()
            },
            halo: HaloWidths { pre: s.halo_pre, post: s.halo_post },
        })
    }
}
