//! Right-hand sides of the governing systems and explicit Euler stepping.

use crate::error::{Error, Result};
use crate::field::{Field, Grid2D, ParamVector};
use crate::stencil::{laplacian, upwind_convection, LaplacianOrder};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 0.25;

/// Governing physics with its coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdeKind {
    /// FitzHugh-Nagumo reaction-diffusion.
    RdFull { gamma: f64, alpha: f64, beta: f64 },
    /// Diffusion part of the reaction-diffusion system only.
    RdDiffusionOnly { gamma: f64 },
    /// 2D viscous Burgers.
    Burgers { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeSpec {
    pub kind: PdeKind,
    pub laplacian_order: LaplacianOrder,
}

impl PdeSpec {
    pub fn rd_full(gamma: f64) -> Result<Self> {
        Self::new(PdeKind::RdFull { gamma, alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA }, LaplacianOrder::Sixth)
    }

    pub fn rd_diffusion_only(gamma: f64) -> Result<Self> {
        Self::new(PdeKind::RdDiffusionOnly { gamma }, LaplacianOrder::Sixth)
    }

    pub fn burgers(nu: f64) -> Result<Self> {
        Self::new(PdeKind::Burgers { nu }, LaplacianOrder::Sixth)
    }

    pub fn new(kind: PdeKind, laplacian_order: LaplacianOrder) -> Result<Self> {
        let ok = match kind {
            PdeKind::RdFull { gamma, alpha, beta } => gamma > 0.0 && alpha.is_finite() && beta.is_finite(),
            PdeKind::RdDiffusionOnly { gamma } => gamma > 0.0,
            PdeKind::Burgers { nu } => nu > 0.0,
        };
        let spec = Self { kind, laplacian_order };
        if !ok || !spec.coefficient().is_finite() {
            return Err(Error::InvalidParameter(format!("invalid physical parameters {kind:?}")));
        }
        Ok(spec)
    }

    pub fn with_laplacian_order(mut self, order: LaplacianOrder) -> Self {
        self.laplacian_order = order;
        self
    }

    /// Name of the scalar parameter that varies between trajectories.
    pub fn param_name(&self) -> &'static str {
        match self.kind {
            PdeKind::RdFull { .. } | PdeKind::RdDiffusionOnly { .. } => "gamma",
            PdeKind::Burgers { .. } => "nu",
        }
    }

    /// Diffusion coefficient (gamma or nu).
    pub fn coefficient(&self) -> f64 {
        match self.kind {
            PdeKind::RdFull { gamma, .. } | PdeKind::RdDiffusionOnly { gamma } => gamma,
            PdeKind::Burgers { nu } => nu,
        }
    }

    /// Same system with the diffusion coefficient replaced.
    pub fn with_coefficient(&self, value: f64) -> Result<Self> {
        let kind = match self.kind {
            PdeKind::RdFull { alpha, beta, .. } => PdeKind::RdFull { gamma: value, alpha, beta },
            PdeKind::RdDiffusionOnly { .. } => PdeKind::RdDiffusionOnly { gamma: value },
            PdeKind::Burgers { .. } => PdeKind::Burgers { nu: value },
        };
        Self::new(kind, self.laplacian_order)
    }

    /// Instantiates the system for one trajectory's parameters. Parameters the
    /// system does not know about are ignored.
    pub fn bind(&self, params: &ParamVector) -> Result<Self> {
        match params.get(self.param_name()) {
            Some(v) => self.with_coefficient(v),
            None => Ok(*self),
        }
    }

    /// Conservative explicit-Euler step bound `0.1 * min(dx, dy)^2 / coefficient`.
    pub fn stability_hint(&self, grid: &Grid2D) -> f64 {
        let h = grid.dx().min(grid.dy());
        0.1 * h * h / self.coefficient()
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PdeKind::RdFull { .. } => "rd",
            PdeKind::RdDiffusionOnly { .. } => "rd-diffusion",
            PdeKind::Burgers { .. } => "burgers",
        }
    }
}

/// `du/dt = F(u)` for the two-channel state.
pub fn rhs(spec: &PdeSpec, u: &Field) -> Result<Field> {
    if u.channels() != 2 {
        return Err(Error::ChannelMismatch { expected: 2, actual: u.channels() });
    }
    let mut out = laplacian(u, spec.laplacian_order).scale(spec.coefficient());
    match spec.kind {
        PdeKind::RdFull { alpha, beta, .. } => {
            let n = u.grid().len();
            let (uu, vv) = (u.channel(0).to_vec(), u.channel(1));
            let data = out.data_mut();
            for p in 0..n {
                let (a, b) = (uu[p], vv[p]);
                data[p] += a - a * a * a - b + alpha;
                data[n + p] += beta * (a - b);
            }
        }
        PdeKind::RdDiffusionOnly { .. } => {}
        PdeKind::Burgers { .. } => {
            let conv = upwind_convection(u, u)?;
            for (o, c) in out.data_mut().iter_mut().zip(conv.data()) {
                *o -= c;
            }
        }
    }
    Ok(out)
}

/// `u + dt * F(u)`. Non-finite results are reported as divergence at step 0.
pub fn euler_step(spec: &PdeSpec, u: &Field, dt: f64) -> Result<Field> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be non-negative")));
    }
    if dt == 0.0 {
        return Ok(u.clone());
    }
    let next = u.axpy(dt, &rhs(spec, u)?)?;
    if !next.is_finite() {
        return Err(Error::Diverged { step: 0 });
    }
    Ok(next)
}

/// `substeps` Euler steps of size `dt_total / substeps`. Divergence reports the
/// zero-based index of the failing sub-step.
pub fn integrate(spec: &PdeSpec, u: &Field, dt_total: f64, substeps: usize) -> Result<Field> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be at least 1".into()));
    }
    let dt = dt_total / substeps as f64;
    let mut state = u.clone();
    for k in 0..substeps {
        state = euler_step(spec, &state, dt).map_err(|e| match e {
            Error::Diverged { .. } => Error::Diverged { step: k },
            other => other,
        })?;
    }
    Ok(state)
}
