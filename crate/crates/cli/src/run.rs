//! Building and running one experiment.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ebsrd_core::geometry::Vec3;
use ebsrd_core::mesh::{build_ebgrid, EBGrid, Field, GridSpec, Layout};
use ebsrd_core::solver::Solver;
use ebsrd_core::srd::{assemble_weight_matrix, SrdDiagnostics};

use crate::config::{ExperimentConfig, InitialConfig, StabilizerName};
use crate::output;
use crate::CliError;

/// Command-line adjustments applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub patches: Option<usize>,
    pub stabilizer: Option<StabilizerName>,
    pub steps: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut cfg = cfg.clone();
        if let Some(p) = self.patches {
            cfg.run.patches = p;
        }
        if let Some(s) = self.stabilizer {
            cfg.scheme.stabilizer = s;
        }
        if let Some(n) = self.steps {
            cfg.run.steps = Some(n);
            cfg.run.end_time = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// What a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub time: f64,
    pub dt: f64,
    pub min: f64,
    pub max: f64,
    pub total: f64,
    pub diagnostics: SrdDiagnostics,
    /// Deepest geometry and redistribution ghost rings actually read.
    pub halo_reads: (usize, usize),
}

/// A mesh, its solver and the evolving state.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub ebgrid: EBGrid,
    pub solver: Solver,
    pub state: Field,
    pub time: f64,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let spec = config.grid_spec()?;
        let scheme = config.scheme_config()?;
        let body = config.geometry()?;
        let ghost = scheme.halo.pre.max(2);
        let ebgrid = build_ebgrid(&body, &spec, ghost, &config.geometry_options())?;
        let solver = Self::solver_for(config, &ebgrid)?;
        let mut state = solver.new_field(1);
        let values = initial_values(config, &ebgrid)?;
        state.scatter(solver.layout(), 0, &values)?;
        Ok(Experiment { config: config.clone(), ebgrid, solver, state, time: 0.0 })
    }

    /// A solver for `config` on an existing mesh.
    pub fn solver_for(config: &ExperimentConfig, ebgrid: &EBGrid) -> Result<Solver, CliError> {
        let scheme = config.scheme_config()?;
        let ghost = scheme.halo.post.max(2);
        let layout = Layout::new(ebgrid.spec(), config.run.patches, ghost)?;
        Ok(Solver::new(ebgrid, layout, scheme)?)
    }

    pub fn spec(&self) -> &GridSpec {
        self.ebgrid.spec()
    }

    /// Number of steps and step size that reach the configured end.
    pub fn schedule(&self) -> (usize, f64) {
        let dt = self.solver.dt();
        match (self.config.run.steps, self.config.run.end_time) {
            (Some(n), _) => (n, dt),
            (None, Some(t)) => {
                let n = (t / dt).ceil().max(1.0) as usize;
                (n, t / n as f64)
            }
            (None, None) => (0, dt),
        }
    }

    /// Fix the step size and redistribute the initial data if asked;
    /// returns the number of steps the config asks for.
    pub fn prepare(&mut self) -> Result<usize, CliError> {
        let (steps, dt) = self.schedule();
        self.solver.set_dt(dt);
        if self.config.run.redistribute_initial {
            self.solver.initialize(&mut self.state)?;
        }
        Ok(steps)
    }

    /// One time step.
    pub fn advance(&mut self) -> Result<(), CliError> {
        self.solver.step(&mut self.state)?;
        self.time += self.solver.dt();
        Ok(())
    }

    /// Smallest and largest value over cells that hold fluid.
    pub fn range(&self) -> Result<(f64, f64), CliError> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (c, v) in self.spec().domain().iter().zip(self.solution()) {
            if !self.ebgrid.cell(c)?.is_covered() {
                min = min.min(v);
                max = max.max(v);
            }
        }
        Ok((min, max))
    }

    pub fn run(&mut self) -> Result<RunSummary, CliError> {
        let steps = self.prepare()?;
        for _ in 0..steps {
            self.advance()?;
        }
        let (min, max) = self.range()?;
        Ok(RunSummary {
            steps,
            time: self.time,
            dt: self.solver.dt(),
            min,
            max,
            total: self.total()?,
            diagnostics: *self.solver.diagnostics(),
            halo_reads: self.solver.halo_usage(),
        })
    }

    /// Valid values in domain (k-major) order.
    pub fn solution(&self) -> Vec<f64> {
        self.state.gather(self.solver.layout(), 0)
    }

    pub fn total(&self) -> Result<f64, CliError> {
        Ok(self.solver.total(&self.state, 0)?)
    }

    /// Write every artifact the config asks for into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
        let out = &self.config.output;
        let values = self.solution();
        if out.field {
            output::write_file(&dir.join("field.csv"), &output::field_dump(&self.ebgrid, std::slice::from_ref(&values), self.time)?)?;
        }
        if out.profile {
            output::write_file(&dir.join("profile.csv"), &output::profile_dump(&self.ebgrid, &values)?)?;
        }
        if out.ebgrid {
            output::write_file(&dir.join("ebgrid.csv"), &output::ebgrid_dump(&self.ebgrid)?)?;
        }
        if out.plan || out.matrix {
            let plans = self.solver.plans();
            if plans.is_empty() {
                return Err(CliError::Config("plan and matrix dumps need an srd stabilizer".into()));
            }
            if out.plan {
                output::write_file(&dir.join("plan.txt"), &output::plan_dump(plans)?)?;
            }
            if out.matrix {
                let m = assemble_weight_matrix(self.spec(), plans)?;
                output::write_file(&dir.join("matrix.csv"), &output::matrix_dump(&m))?;
            }
        }
        output::write_file(&dir.join("config.toml"), &self.config.to_toml())?;
        Ok(())
    }
}

fn unit_or(v: &Option<Vec<f64>>, fallback: Vec3) -> Vec3 {
    let mut d = fallback;
    if let Some(v) = v {
        d = [0.0; 3];
        for (o, x) in d.iter_mut().zip(v) {
            *o = *x;
        }
    }
    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        d.map(|x| x / n)
    } else {
        d
    }
}

fn padded(v: &[f64]) -> Vec3 {
    let mut x = [0.0; 3];
    for (o, a) in x.iter_mut().zip(v) {
        *o = *a;
    }
    x
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Initial state sampled at cell centroids, in domain order.
pub fn initial_values(config: &ExperimentConfig, ebgrid: &EBGrid) -> Result<Vec<f64>, CliError> {
    let spec = ebgrid.spec();
    let flow = config.velocity()?;
    let domain = spec.domain();
    let mut values = Vec::with_capacity(domain.len());
    if let InitialConfig::Random { seed, low, high } = config.initial {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..domain.len() {
            values.push(rng.gen_range(low..=high));
        }
        return Ok(values);
    }
    for c in domain.iter() {
        let x = spec.position(c, ebgrid.cell(c)?.centroid);
        let v = match &config.initial {
            InitialConfig::Constant { value } => *value,
            InitialConfig::Heaviside { position, direction, high, low } => {
                let t = unit_or(direction, flow);
                let p = padded(position);
                if dot(t, x) - dot(t, p) < 0.0 {
                    *high
                } else {
                    *low
                }
            }
            InitialConfig::Gaussian { center, width, direction, base, amplitude } => {
                let c0 = padded(center);
                let r = [x[0] - c0[0], x[1] - c0[1], x[2] - c0[2]];
                let s2 = match direction {
                    Some(_) => {
                        let t = unit_or(direction, flow);
                        dot(r, t).powi(2)
                    }
                    None => dot(r, r),
                };
                base + amplitude * (-s2 / (width * width)).exp()
            }
            InitialConfig::Linear { gradient, value } => value + dot(padded(gradient), x),
            InitialConfig::Random { .. } => unreachable!("handled above"),
        };
        values.push(v);
    }
    Ok(values)
}

/// Load, run and write artifacts; returns the summary.
pub fn run_config(config: &ExperimentConfig, out: Option<&Path>) -> Result<(Experiment, RunSummary), CliError> {
    let mut exp = Experiment::build(config)?;
    let summary = exp.run()?;
    if let Some(dir) = out {
        exp.write_artifacts(dir)?;
    }
    Ok((exp, summary))
}
