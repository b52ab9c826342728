//! Time stepping for the four formulations with monolithic Newton solves.
//!
//! Unknown layout for the filtered schemes is `[u | P | w | lambda | muP | muL]`
//! and `[u | P | muP]` for the unfiltered ones; `mu*` are the scalar
//! multipliers fixing the pressure means. Residual rows follow the same order
//! (momentum, u-divergence, filter, w-divergence, mean constraints).

use std::fmt;
use std::sync::Arc;

use crate::bc::BoundaryConditions;
use crate::error::{invalid, Error, Result};
use crate::filter::{build_filter, FilterSystem};
use crate::mesh::Point;
use crate::operators::{gather, ElementKernel, NonlinearKind, OperatorSet, MAX_LOCAL, NONLINEAR_ORDER};
use crate::quadrature::quadrature;
use crate::space::{interpolate, FeSpace, Field, Tabulation};
use crate::sparse::{inf_norm, Factorization, LuCache, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    EmacReg,
    Emac,
    Skew,
    NsAlpha,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::EmacReg, Scheme::Emac, Scheme::Skew, Scheme::NsAlpha];

    /// Whether the scheme carries a filtered velocity and filter multiplier.
    pub fn is_filtered(self) -> bool {
        matches!(self, Scheme::EmacReg | Scheme::NsAlpha)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::EmacReg => "emacreg",
            Scheme::Emac => "emac",
            Scheme::Skew => "skew",
            Scheme::NsAlpha => "nsalpha",
        }
    }

    fn kind(self) -> NonlinearKind {
        match self {
            Scheme::EmacReg | Scheme::Emac => NonlinearKind::Emac,
            Scheme::Skew => NonlinearKind::Skew,
            Scheme::NsAlpha => NonlinearKind::Rot,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown scheme '{s}' (expected emacreg, emac, skew or nsalpha)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    CrankNicolson,
    Bdf2,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::CrankNicolson => "cn",
            Integrator::Bdf2 => "bdf2",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cn" | "crank-nicolson" | "cranknicolson" => Ok(Integrator::CrankNicolson),
            "bdf2" => Ok(Integrator::Bdf2),
            _ => Err(invalid(format!("unknown integrator '{s}' (expected cn or bdf2)"))),
        }
    }
}

pub type ForcingFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub integrator: Integrator,
    pub dt: f64,
    pub nu: f64,
    pub alpha: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Keep the factored Jacobian across iterations and steps, refactoring
    /// only when the residual contracts by less than a factor of ten.
    pub reuse_jacobian: bool,
    pub forcing: Option<ForcingFn>,
}

impl fmt::Debug for StepperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepperConfig")
            .field("scheme", &self.scheme)
            .field("integrator", &self.integrator)
            .field("dt", &self.dt)
            .field("nu", &self.nu)
            .field("alpha", &self.alpha)
            .field("newton_tol", &self.newton_tol)
            .field("newton_max", &self.newton_max)
            .field("reuse_jacobian", &self.reuse_jacobian)
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

impl StepperConfig {
    pub fn new(scheme: Scheme, integrator: Integrator, dt: f64, nu: f64, alpha: f64) -> Self {
        StepperConfig { scheme, integrator, dt, nu, alpha, newton_tol: 1e-10, newton_max: 20, reuse_jacobian: true, forcing: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.nu >= 0.0) {
            return Err(invalid(format!("viscosity must be non-negative, got {}", self.nu)));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid(format!("filter radius must be non-negative, got {}", self.alpha)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(invalid("Newton tolerance and iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Unknowns at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: Field,
    /// Pressure; the redefined pressure for the EMAC-based schemes. With
    /// Crank-Nicolson it approximates the pressure at the step midpoint.
    pub p: Field,
    /// Filtered velocity; a copy of `u` for the unfiltered schemes.
    pub w: Field,
    pub lambda: Option<Field>,
    /// Mean-constraint multipliers for `p` and `lambda`.
    pub multipliers: [f64; 2],
}

/// Block offsets of the monolithic vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub nu: usize,
    pub np: usize,
    pub filtered: bool,
}

impl Layout {
    pub fn u(&self) -> usize {
        0
    }
    pub fn p(&self) -> usize {
        self.nu
    }
    pub fn w(&self) -> usize {
        self.nu + self.np
    }
    pub fn lambda(&self) -> usize {
        2 * self.nu + self.np
    }
    pub fn mu_p(&self) -> usize {
        if self.filtered {
            2 * (self.nu + self.np)
        } else {
            self.nu + self.np
        }
    }
    pub fn mu_lambda(&self) -> usize {
        self.mu_p() + 1
    }
    pub fn len(&self) -> usize {
        if self.filtered {
            2 * (self.nu + self.np) + 2
        } else {
            self.nu + self.np + 1
        }
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Callback invoked after every accepted step.
pub trait Observer {
    fn observe(&mut self, state: &State) -> Result<()>;
}

impl<F: FnMut(&State) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &State) -> Result<()> {
        self(state)
    }
}

/// Newton statistics of the most recent step.
#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    /// Residual norm before the first update and after each iteration.
    pub residuals: Vec<f64>,
}

impl NewtonReport {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }
}

pub struct Stepper {
    config: StepperConfig,
    vel: Arc<FeSpace>,
    pres: Arc<FeSpace>,
    ops: OperatorSet,
    u_bc: BoundaryConditions,
    w_bc: BoundaryConditions,
    layout: Layout,
    kernel: ElementKernel,
    /// Time-independent part of the Jacobian on the full pattern.
    linear: SparseMatrix,
    /// Storage positions of the local `(u, u)` and `(u, w)` element blocks.
    pos_uu: Vec<usize>,
    pos_uw: Vec<usize>,
    u_fixed: Vec<usize>,
    w_fixed: Vec<usize>,
    lu: LuCache,
    /// Factored Jacobian kept across iterations and steps, tagged with the
    /// integrator it was built for.
    frozen: Option<(Factorization, bool)>,
    forcing_tab: Tabulation,
    report: NewtonReport,
    current_linear: Option<Integrator>,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper").field("config", &self.config).field("unknowns", &self.layout.len()).finish()
    }
}

impl Stepper {
    /// `u_bc` constrains `u`; `w_bc` constrains `w` for the filtered schemes.
    pub fn new(
        config: StepperConfig,
        vel: Arc<FeSpace>,
        pres: Arc<FeSpace>,
        u_bc: BoundaryConditions,
        w_bc: BoundaryConditions,
    ) -> Result<Self> {
        config.validate()?;
        if vel.components() != 2 || pres.components() != 1 || !vel.same_mesh(&pres) {
            return Err(invalid("stepper needs a vector velocity and scalar pressure space on one mesh"));
        }
        let ops = OperatorSet::assemble(&vel, &pres)?;
        let layout = Layout { nu: vel.num_dofs(), np: pres.num_dofs(), filtered: config.scheme.is_filtered() };
        let kernel = ElementKernel::new(config.scheme.kind(), vel.degree(), NONLINEAR_ORDER)?;
        let forcing_tab = Tabulation::new(vel.degree(), &quadrature(NONLINEAR_ORDER)?);
        let u_fixed = u_bc.dofs(&vel);
        let w_fixed = if layout.filtered { w_bc.dofs(&vel) } else { Vec::new() };
        let mut stepper = Stepper {
            config,
            vel,
            pres,
            ops,
            u_bc,
            w_bc,
            layout,
            kernel,
            linear: SparseMatrix::zeros(0, 0),
            pos_uu: Vec::new(),
            pos_uw: Vec::new(),
            u_fixed,
            w_fixed,
            lu: LuCache::default(),
            frozen: None,
            forcing_tab,
            report: NewtonReport::default(),
            current_linear: None,
        };
        stepper.build_pattern()?;
        Ok(stepper)
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn velocity_space(&self) -> &Arc<FeSpace> {
        &self.vel
    }

    pub fn pressure_space(&self) -> &Arc<FeSpace> {
        &self.pres
    }

    pub fn operators(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn last_report(&self) -> &NewtonReport {
        &self.report
    }

    pub fn u_conditions(&self) -> &BoundaryConditions {
        &self.u_bc
    }

    pub fn w_conditions(&self) -> &BoundaryConditions {
        &self.w_bc
    }

    /// `(theta, c1, c0, cm1)`: weight of the new level in the spatial terms and
    /// the time-difference coefficients of levels n+1, n, n-1 (times 1/dt).
    fn coefficients(&self, bdf2: bool) -> (f64, f64, f64, f64) {
        if bdf2 {
            (1.0, 1.5, -2.0, 0.5)
        } else {
            (0.5, 1.0, -1.0, 0.0)
        }
    }

    fn build_pattern(&mut self) -> Result<()> {
        let l = self.layout;
        let mut entries: Vec<(usize, usize)> = Vec::new();
        let push_block = |m: &SparseMatrix, r0: usize, c0: usize, entries: &mut Vec<(usize, usize)>| {
            for i in 0..m.nrows() {
                for &j in m.row(i).0 {
                    entries.push((r0 + i, c0 + j));
                }
            }
        };
        // element connectivity of the convective blocks
        for t in 0..self.vel.num_cells() {
            let dofs = self.vel.cell_dofs(t);
            for &i in &dofs {
                for &j in &dofs {
                    entries.push((l.u() + i, l.u() + j));
                    if l.filtered {
                        entries.push((l.u() + i, l.w() + j));
                        entries.push((l.w() + i, l.w() + j));
                        entries.push((l.w() + i, l.u() + j));
                    }
                }
            }
        }
        let b = &self.ops.divergence;
        let bt = b.transpose();
        push_block(&bt, l.u(), l.p(), &mut entries);
        push_block(b, l.p(), l.u(), &mut entries);
        for i in 0..l.np {
            entries.push((l.p() + i, l.mu_p()));
            entries.push((l.mu_p(), l.p() + i));
        }
        if l.filtered {
            push_block(&bt, l.w(), l.lambda(), &mut entries);
            push_block(b, l.lambda(), l.w(), &mut entries);
            for i in 0..l.np {
                entries.push((l.lambda() + i, l.mu_lambda()));
                entries.push((l.mu_lambda(), l.lambda() + i));
            }
        }
        // diagonal everywhere so identity rows and zero blocks stay structural
        entries.extend((0..l.len()).map(|i| (i, i)));
        let mut lin = SparseMatrix::from_pattern(l.len(), l.len(), entries)?;

        let (theta, c1, _, _) = self.coefficients(false);
        self.fill_linear(&mut lin, theta, c1)?;
        self.current_linear = Some(Integrator::CrankNicolson);

        let nd = 2 * self.vel.nloc();
        self.pos_uu.clear();
        self.pos_uw.clear();
        for t in 0..self.vel.num_cells() {
            let dofs = self.vel.cell_dofs(t);
            for i in 0..nd {
                for j in 0..nd {
                    self.pos_uu.push(lin.position(l.u() + dofs[i], l.u() + dofs[j]).expect("pattern"));
                    if l.filtered {
                        self.pos_uw.push(lin.position(l.u() + dofs[i], l.w() + dofs[j]).expect("pattern"));
                    }
                }
            }
        }
        self.linear = lin;
        Ok(())
    }

    fn fill_linear(&self, lin: &mut SparseMatrix, theta: f64, c1: f64) -> Result<()> {
        let l = self.layout;
        let dt = self.config.dt;
        let nu = self.config.nu;
        let a2 = self.config.alpha * self.config.alpha;
        lin.values_mut().fill(0.0);
        let add = |m: &SparseMatrix, s: f64, r0: usize, c0: usize, lin: &mut SparseMatrix| {
            for i in 0..m.nrows() {
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    let p = lin.position(r0 + i, c0 + j).expect("pattern");
                    lin.values_mut()[p] += s * v;
                }
            }
        };
        let ops = &self.ops;
        let bt = ops.divergence.transpose();
        let mcol = crate::filter::column(&ops.pressure_mean);
        let mrow = mcol.transpose();
        add(&ops.mass, c1 / dt, l.u(), l.u(), lin);
        add(&ops.stiffness, theta * nu, l.u(), l.u(), lin);
        add(&bt, -1.0, l.u(), l.p(), lin);
        add(&ops.divergence, -1.0, l.p(), l.u(), lin);
        add(&mcol, 1.0, l.p(), l.mu_p(), lin);
        add(&mrow, 1.0, l.mu_p(), l.p(), lin);
        if l.filtered {
            add(&ops.mass, -1.0, l.w(), l.u(), lin);
            add(&ops.mass, 1.0, l.w(), l.w(), lin);
            add(&ops.stiffness, a2, l.w(), l.w(), lin);
            add(&bt, 1.0, l.w(), l.lambda(), lin);
            add(&ops.divergence, 1.0, l.lambda(), l.w(), lin);
            add(&mcol, 1.0, l.lambda(), l.mu_lambda(), lin);
            add(&mrow, 1.0, l.mu_lambda(), l.lambda(), lin);
        }
        Ok(())
    }

    fn ensure_integrator(&mut self, bdf2: bool) -> Result<()> {
        let want = if bdf2 { Integrator::Bdf2 } else { Integrator::CrankNicolson };
        if self.current_linear != Some(want) {
            let (theta, c1, _, _) = self.coefficients(bdf2);
            let mut lin = std::mem::replace(&mut self.linear, SparseMatrix::zeros(0, 0));
            self.fill_linear(&mut lin, theta, c1)?;
            self.linear = lin;
            self.current_linear = Some(want);
        }
        Ok(())
    }

    /// Monolithic vector of a state.
    pub fn pack(&self, s: &State) -> Vec<f64> {
        let l = self.layout;
        let mut x = vec![0.0; l.len()];
        x[l.u()..l.u() + l.nu].copy_from_slice(&s.u.coefficients);
        x[l.p()..l.p() + l.np].copy_from_slice(&s.p.coefficients);
        x[l.mu_p()] = s.multipliers[0];
        if l.filtered {
            x[l.w()..l.w() + l.nu].copy_from_slice(&s.w.coefficients);
            if let Some(lam) = &s.lambda {
                x[l.lambda()..l.lambda() + l.np].copy_from_slice(&lam.coefficients);
            }
            x[l.mu_lambda()] = s.multipliers[1];
        }
        x
    }

    pub fn unpack(&self, x: &[f64], t: f64) -> State {
        let l = self.layout;
        let u = Field { space: self.vel.clone(), coefficients: x[l.u()..l.u() + l.nu].to_vec() };
        let p = Field { space: self.pres.clone(), coefficients: x[l.p()..l.p() + l.np].to_vec() };
        if l.filtered {
            State {
                t,
                u,
                p,
                w: Field { space: self.vel.clone(), coefficients: x[l.w()..l.w() + l.nu].to_vec() },
                lambda: Some(Field {
                    space: self.pres.clone(),
                    coefficients: x[l.lambda()..l.lambda() + l.np].to_vec(),
                }),
                multipliers: [x[l.mu_p()], x[l.mu_lambda()]],
            }
        } else {
            State { t, w: u.clone(), u, p, lambda: None, multipliers: [x[l.mu_p()], 0.0] }
        }
    }

    /// `F_i = (f(., t), phi_i)`
    fn forcing_vector(&self, t: f64) -> Option<Vec<f64>> {
        let f = self.config.forcing.as_ref()?;
        let tab = &self.forcing_tab;
        let mesh = self.vel.mesh();
        let mut out = vec![0.0; self.layout.nu];
        for c in 0..self.vel.num_cells() {
            let tri = mesh.triangles[c];
            let geo = self.vel.geometry(c);
            let nodes = self.vel.cell_nodes(c);
            for q in 0..tab.num_points() {
                let l = tab.points[q];
                let x = [0, 1].map(|d| (0..3).map(|k| l[k] * mesh.vertices[tri[k]][d]).sum::<f64>());
                let fv = f(x, t);
                let w = tab.weights[q] * geo.area;
                for (k, &n) in nodes.iter().enumerate() {
                    let phi = tab.value_row(q)[k];
                    out[2 * n] += w * fv[0] * phi;
                    out[2 * n + 1] += w * fv[1] * phi;
                }
            }
        }
        Some(out)
    }

    /// Residual and, optionally, Jacobian at the monolithic iterate `x`.
    fn assemble(
        &mut self,
        x: &[f64],
        t_new: f64,
        old: &State,
        older: Option<&State>,
        want_jacobian: bool,
    ) -> Result<(Vec<f64>, Option<SparseMatrix>)> {
        let l = self.layout;
        let bdf2 = older.is_some();
        self.ensure_integrator(bdf2)?;
        let (theta, c1, c0, cm1) = self.coefficients(bdf2);
        let dt = self.config.dt;
        let nu = self.config.nu;
        let a2 = self.config.alpha * self.config.alpha;
        let ops = &self.ops;
        let nvel = l.nu;

        let u1 = &x[l.u()..l.u() + nvel];
        let p1 = &x[l.p()..l.p() + l.np];
        let u0 = &old.u.coefficients;
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| theta * p + (1.0 - theta) * q).collect() };
        let u_mid = mix(u1, u0);
        let w_mid = if l.filtered { mix(&x[l.w()..l.w() + nvel], &old.w.coefficients) } else { Vec::new() };

        let mut r = vec![0.0; l.len()];
        {
            let mut du: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| (c1 * a + c0 * b) / dt).collect();
            if let Some(prev) = older {
                du.iter_mut().zip(&prev.u.coefficients).for_each(|(d, p)| *d += cm1 * p / dt);
            }
            let mom = &mut r[l.u()..l.u() + nvel];
            ops.mass.matvec_into(&du, mom);
            ops.stiffness.matvec_add(nu, &u_mid, mom);
            let btp = ops.divergence.transpose_matvec(p1);
            mom.iter_mut().zip(&btp).for_each(|(m, b)| *m -= b);
            let t_force = if bdf2 { t_new } else { t_new - 0.5 * dt };
            if let Some(f) = self.forcing_vector(t_force) {
                mom.iter_mut().zip(&f).for_each(|(m, v)| *m -= v);
            }
        }
        {
            let bu = ops.divergence.matvec(u1);
            for i in 0..l.np {
                r[l.p() + i] = -bu[i] + ops.pressure_mean[i] * x[l.mu_p()];
            }
            r[l.mu_p()] = crate::operators::dot(&ops.pressure_mean, p1);
        }
        if l.filtered {
            let w1 = &x[l.w()..l.w() + nvel];
            let lam = &x[l.lambda()..l.lambda() + l.np];
            let filt = &mut r[l.w()..l.w() + nvel];
            ops.mass.matvec_into(w1, filt);
            ops.mass.matvec_add(-1.0, u1, filt);
            ops.stiffness.matvec_add(a2, w1, filt);
            let btl = ops.divergence.transpose_matvec(lam);
            filt.iter_mut().zip(&btl).for_each(|(f, b)| *f += b);
            let bw = ops.divergence.matvec(w1);
            for i in 0..l.np {
                r[l.lambda() + i] = bw[i] + ops.pressure_mean[i] * x[l.mu_lambda()];
            }
            r[l.mu_lambda()] = crate::operators::dot(&ops.pressure_mean, lam);
        }

        // convective term and its Jacobian, element by element
        let mut jac = want_jacobian.then(|| self.linear.clone());
        let (a_mid, b_mid): (&[f64], &[f64]) = match self.config.scheme {
            Scheme::EmacReg => (&w_mid, &w_mid),
            Scheme::Emac | Scheme::Skew => (&u_mid, &u_mid),
            Scheme::NsAlpha => (&w_mid, &u_mid),
        };
        let nd = 2 * self.vel.nloc();
        let (mut al, mut bl, mut rl) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
        let mut ja = vec![0.0; MAX_LOCAL * MAX_LOCAL];
        let mut jb = vec![0.0; MAX_LOCAL * MAX_LOCAL];
        for t in 0..self.vel.num_cells() {
            gather(&self.vel, a_mid, t, &mut al);
            gather(&self.vel, b_mid, t, &mut bl);
            let geo = self.vel.geometry(t);
            if want_jacobian {
                self.kernel.eval(geo, &al, &bl, Some(&mut rl), Some(&mut ja), Some(&mut jb));
            } else {
                self.kernel.eval(geo, &al, &bl, Some(&mut rl), None, None);
            }
            let nodes = self.vel.cell_nodes(t);
            for (k, &n) in nodes.iter().enumerate() {
                r[l.u() + 2 * n] += rl[2 * k];
                r[l.u() + 2 * n + 1] += rl[2 * k + 1];
            }
            if let Some(j) = jac.as_mut() {
                let vals = j.values_mut();
                let base = t * nd * nd;
                for i in 0..nd {
                    for c in 0..nd {
                        let (da, db) = (ja[i * MAX_LOCAL + c], jb[i * MAX_LOCAL + c]);
                        match self.config.scheme {
                            Scheme::EmacReg => vals[self.pos_uw[base + i * nd + c]] += theta * (da + db),
                            Scheme::Emac | Scheme::Skew => vals[self.pos_uu[base + i * nd + c]] += theta * (da + db),
                            Scheme::NsAlpha => {
                                vals[self.pos_uw[base + i * nd + c]] += theta * da;
                                vals[self.pos_uu[base + i * nd + c]] += theta * db;
                            }
                        }
                    }
                }
            }
        }

        for (d, g) in self.u_bc.values(&self.vel, t_new) {
            r[l.u() + d] = x[l.u() + d] - g;
        }
        if l.filtered {
            for (d, g) in self.w_bc.values(&self.vel, t_new) {
                r[l.w() + d] = x[l.w() + d] - g;
            }
        }
        if let Some(j) = jac.as_mut() {
            for &d in &self.u_fixed {
                j.set_identity_row(l.u() + d);
            }
            for &d in &self.w_fixed {
                j.set_identity_row(l.w() + d);
            }
        }
        Ok((r, jac))
    }

    fn check_history(&self, older: Option<&State>) -> Result<()> {
        if self.config.integrator == Integrator::Bdf2 && older.is_none() {
            return Err(Error::State("BDF2 needs the state two levels back".into()));
        }
        Ok(())
    }

    /// Residual of the fully discrete system at `new` given the history.
    ///
    /// With BDF2 `older` is required; with Crank-Nicolson it must be `None`.
    pub fn residual(&mut self, new: &State, old: &State, older: Option<&State>) -> Result<Vec<f64>> {
        self.check_history(older)?;
        let older = if self.config.integrator == Integrator::Bdf2 { older } else { None };
        let x = self.pack(new);
        Ok(self.assemble(&x, new.t, old, older, false)?.0)
    }

    fn newton_update(&mut self, x: &mut [f64], t_new: f64, old: &State, older: Option<&State>, iteration: usize) -> Result<()> {
        let (r, jac) = self.assemble(x, t_new, old, older, true)?;
        let jac = jac.expect("jacobian requested");
        let bdf2 = older.is_some();
        let solve = |lu: &mut LuCache| -> Result<(Factorization, Vec<f64>)> {
            let f = lu.factor(&jac)?;
            let dx = f.solve(&r)?;
            Ok((f, dx))
        };
        let (f, dx) = solve(&mut self.lu).map_err(|e| Error::NewtonSolve { iteration, source: Box::new(e) })?;
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi -= d);
        self.frozen = self.config.reuse_jacobian.then_some((f, bdf2));
        Ok(())
    }

    /// One Newton update from `guess`; returns the new iterate and the
    /// infinity norm of its residual.
    pub fn newton_step(&mut self, guess: &State, old: &State, older: Option<&State>) -> Result<(State, f64)> {
        self.check_history(older)?;
        let older = if self.config.integrator == Integrator::Bdf2 { older } else { None };
        let mut x = self.pack(guess);
        self.newton_update(&mut x, guess.t, old, older, 1)?;
        let (r, _) = self.assemble(&x, guess.t, old, older, false)?;
        Ok((self.unpack(&x, guess.t), inf_norm(&r)))
    }

    /// Advances one step. BDF2 falls back to Crank-Nicolson when `history`
    /// (the level before `state`) is missing.
    pub fn advance(&mut self, state: &State, history: Option<&State>) -> Result<State> {
        let t_new = state.t + self.config.dt;
        let older = match self.config.integrator {
            Integrator::Bdf2 => history,
            Integrator::CrankNicolson => None,
        };
        self.solve_step(state, older, t_new).map_err(|e| Error::Step { t: t_new, source: Box::new(e) })
    }

    fn solve_step(&mut self, old: &State, older: Option<&State>, t_new: f64) -> Result<State> {
        let bdf2 = older.is_some();
        let mut x = self.pack(old);
        let (mut r, _) = self.assemble(&x, t_new, old, older, false)?;
        let mut norm = inf_norm(&r);
        self.report = NewtonReport { residuals: vec![norm] };
        if !self.config.reuse_jacobian {
            self.frozen = None;
        }
        let mut it = 0;
        while !(norm <= self.config.newton_tol) {
            if it == self.config.newton_max || !norm.is_finite() {
                return Err(Error::NonConvergence { iterations: it, residual: norm });
            }
            it += 1;
            let stale = matches!(&self.frozen, Some((_, b)) if *b == bdf2);
            if !stale {
                self.newton_update(&mut x, t_new, old, older, it)?;
                r = self.assemble(&x, t_new, old, older, false)?.0;
                norm = inf_norm(&r);
                self.report.residuals.push(norm);
                continue;
            }
            // chord iteration with the stored factors
            let dx = self.frozen.as_ref().unwrap().0.solve(&r).map_err(|e| Error::NewtonSolve { iteration: it, source: Box::new(e) })?;
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - d).collect();
            let (r_trial, _) = self.assemble(&trial, t_new, old, older, false)?;
            let n_trial = inf_norm(&r_trial);
            if n_trial > 0.1 * norm && n_trial > self.config.newton_tol {
                // slow contraction: refactor at the current iterate next time
                self.frozen = None;
                if !(n_trial < norm) {
                    continue;
                }
            }
            x = trial;
            r = r_trial;
            norm = n_trial;
            self.report.residuals.push(norm);
        }
        Ok(self.unpack(&x, t_new))
    }

    /// Initial state: `u` is the discretely divergence-free L2 projection of
    /// `u0` carrying the velocity boundary data, and `(w, lambda)` its filter.
    pub fn initial_state(&self, u0: impl Fn(Point) -> [f64; 2]) -> Result<State> {
        let projector = build_filter(&self.vel, &self.pres, 0.0, &self.u_bc)?;
        let raw = interpolate(&self.vel, |p, _| u0(p), 0.0)?;
        let (u, _) = projector.apply_at(&raw, 0.0)?;
        self.state_from_velocity(u, 0.0)
    }

    /// Initial state from nodal interpolants of both `u0` and `w0`, with a
    /// zero filter multiplier. Intended for comparisons against exact data.
    pub fn initial_state_interpolated(
        &self,
        u0: impl Fn(Point) -> [f64; 2],
        w0: impl Fn(Point) -> [f64; 2],
    ) -> Result<State> {
        let u = interpolate(&self.vel, |p, _| u0(p), 0.0)?;
        let p = Field::zeros(&self.pres);
        if !self.layout.filtered {
            return Ok(State { t: 0.0, w: u.clone(), u, p, lambda: None, multipliers: [0.0; 2] });
        }
        let w = interpolate(&self.vel, |p, _| w0(p), 0.0)?;
        Ok(State { t: 0.0, u, p, w, lambda: Some(Field::zeros(&self.pres)), multipliers: [0.0; 2] })
    }

    /// Completes a state from its velocity, filtering when the scheme needs it.
    pub fn state_from_velocity(&self, u: Field, t: f64) -> Result<State> {
        let p = Field::zeros(&self.pres);
        if !self.layout.filtered {
            return Ok(State { t, w: u.clone(), u, p, lambda: None, multipliers: [0.0; 2] });
        }
        let (w, lambda) = self.filter()?.apply_at(&u, t)?;
        Ok(State { t, u, p, w, lambda: Some(lambda), multipliers: [0.0; 2] })
    }

    /// The scheme's filter (radius `alpha`, boundary data of `w`).
    pub fn filter(&self) -> Result<FilterSystem> {
        build_filter(&self.vel, &self.pres, self.config.alpha, &self.w_bc)
    }

    /// Number of steps needed to reach `end_time` from `t0`.
    pub fn steps_to(&self, t0: f64, end_time: f64) -> usize {
        let n = (end_time - t0) / self.config.dt;
        if n <= 0.0 {
            0
        } else {
            (n - 1e-9).ceil() as usize
        }
    }

    /// Advances `initial` to `end_time`, calling the observers on the initial
    /// state and after every step.
    pub fn run(&mut self, initial: State, end_time: f64, observers: &mut [&mut dyn Observer]) -> Result<State> {
        for o in observers.iter_mut() {
            o.observe(&initial)?;
        }
        let steps = self.steps_to(initial.t, end_time);
        let mut prev: Option<State> = None;
        let mut cur = initial;
        for _ in 0..steps {
            let next = self.advance(&cur, prev.as_ref())?;
            for o in observers.iter_mut() {
                o.observe(&next)?;
            }
            prev = Some(std::mem::replace(&mut cur, next));
        }
        Ok(cur)
    }
}
