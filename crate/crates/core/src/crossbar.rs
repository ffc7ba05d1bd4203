//! Differential memristor crossbar.
//!
//! Each signed weight is a pair of devices on two column lines: the `+` line
//! collects `sum_i G+_ij * V_i` and the `-` line collects `sum_i G-_ij * V_i`.
//! Drives are the voltages across the devices, i.e. pad voltage minus the
//! column clamp (1.2 V by default), so a 1.8 V logic pulse is a 0.6 V drive.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceError, Memristor, MemristorParams, Polarity, WriteVerify};
use crate::matrix::Matrix;
use crate::rng::SimRng;

/// Largest drive magnitude that is guaranteed not to reprogram a device.
pub const MAX_DRIVE: f64 = 0.6;
pub const DEFAULT_CLAMP: f64 = 1.2;

// Lets 1.8 V - 1.2 V style arithmetic through without admitting real overdrive.
pub const DRIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrossbarError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("drive {drive} V on row {row} exceeds the safe window of +/-{MAX_DRIVE} V")]
    Overdrive { row: usize, drive: f64 },
    #[error("weight {weight} at ({row}, {col}) needs {needed:e} S of conductance span, device offers {span:e} S")]
    Unrepresentable { row: usize, col: usize, weight: f64, needed: f64, span: f64 },
    #[error("invalid weight scale k={0}")]
    InvalidScale(f64),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("{} of {} devices failed to converge: {}", .0.failures().count(), .0.cells.len(), .0.failure_summary())]
    PartialFailure(ProgrammingReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialCrossbar {
    n_in: usize,
    n_out: usize,
    plus: Vec<Memristor>,
    minus: Vec<Memristor>,
    pub v_clamp: f64,
}

impl DifferentialCrossbar {
    /// All devices at `g_min`.
    pub fn fresh(n_in: usize, n_out: usize, params: MemristorParams) -> Self {
        let dev = Memristor::fresh(params);
        DifferentialCrossbar {
            n_in,
            n_out,
            plus: vec![dev; n_in * n_out],
            minus: vec![dev; n_in * n_out],
            v_clamp: DEFAULT_CLAMP,
        }
    }

    /// Set conductances directly, as if the array were populated with fixed resistors.
    pub fn from_conductances(
        params: MemristorParams,
        g_plus: &Matrix,
        g_minus: &Matrix,
    ) -> Result<Self, CrossbarError> {
        params.validate()?;
        check_same_shape(g_plus, g_minus)?;
        let mut xbar = Self::fresh(g_plus.rows(), g_plus.cols(), params);
        for (dev, &g) in xbar.plus.iter_mut().zip(g_plus.as_slice()) {
            dev.state = device::MemristorState::new(g, &params)?;
        }
        for (dev, &g) in xbar.minus.iter_mut().zip(g_minus.as_slice()) {
            dev.state = device::MemristorState::new(g, &params)?;
        }
        Ok(xbar)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        assert!(row < self.n_in && col < self.n_out, "({row}, {col}) outside {}x{}", self.n_in, self.n_out);
        row * self.n_out + col
    }

    pub fn device(&self, polarity: Polarity, row: usize, col: usize) -> &Memristor {
        let i = self.idx(row, col);
        match polarity {
            Polarity::Potentiate => &self.plus[i],
            Polarity::Depress => &self.minus[i],
        }
    }

    pub fn device_mut(&mut self, polarity: Polarity, row: usize, col: usize) -> &mut Memristor {
        let i = self.idx(row, col);
        match polarity {
            Polarity::Potentiate => &mut self.plus[i],
            Polarity::Depress => &mut self.minus[i],
        }
    }

    pub fn g_plus(&self) -> Matrix {
        Matrix::from_fn(self.n_in, self.n_out, |r, c| self.plus[r * self.n_out + c].g())
    }

    pub fn g_minus(&self) -> Matrix {
        Matrix::from_fn(self.n_in, self.n_out, |r, c| self.minus[r * self.n_out + c].g())
    }

    /// Effective signed weights in siemens, `G+ - G-`.
    pub fn g_diff(&self) -> Matrix {
        Matrix::from_fn(self.n_in, self.n_out, |r, c| {
            let i = r * self.n_out + c;
            self.plus[i].g() - self.minus[i].g()
        })
    }

    fn check_drive(&self, drive: &[f64]) -> Result<(), CrossbarError> {
        if drive.len() != self.n_in {
            return Err(CrossbarError::Shape(format!(
                "drive has {} entries, crossbar has {} rows",
                drive.len(),
                self.n_in
            )));
        }
        for (row, &d) in drive.iter().enumerate() {
            if !(d.is_finite() && d.abs() <= MAX_DRIVE + DRIVE_SLACK) {
                return Err(CrossbarError::Overdrive { row, drive: d });
            }
        }
        Ok(())
    }

    /// Column currents `(I+, I-)` for the given row drives. Rows are summed in
    /// index order.
    pub fn vmm(&self, drive: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CrossbarError> {
        self.check_drive(drive)?;
        let mut i_plus = vec![0.0; self.n_out];
        let mut i_minus = vec![0.0; self.n_out];
        for (row, &v) in drive.iter().enumerate() {
            let base = row * self.n_out;
            for col in 0..self.n_out {
                i_plus[col] += self.plus[base + col].g() * v;
                i_minus[col] += self.minus[base + col].g() * v;
            }
        }
        Ok((i_plus, i_minus))
    }

    /// As [`vmm`](Self::vmm) but every device conductance is read through its
    /// own read-noise law for this evaluation.
    pub fn vmm_noisy(&self, drive: &[f64], rng: &mut SimRng) -> Result<(Vec<f64>, Vec<f64>), CrossbarError> {
        use rand::Rng;
        use rand_distr::StandardNormal;
        self.check_drive(drive)?;
        let mut i_plus = vec![0.0; self.n_out];
        let mut i_minus = vec![0.0; self.n_out];
        for (row, &v) in drive.iter().enumerate() {
            let base = row * self.n_out;
            for col in 0..self.n_out {
                let p = &self.plus[base + col];
                let m = &self.minus[base + col];
                let zp: f64 = rng.sample(StandardNormal);
                let zm: f64 = rng.sample(StandardNormal);
                i_plus[col] += p.g() * (1.0 + p.params.sigma_read * zp) * v;
                i_minus[col] += m.g() * (1.0 + m.params.sigma_read * zm) * v;
            }
        }
        Ok((i_plus, i_minus))
    }

    /// Differential output currents in one call.
    pub fn forward(&self, drive: &[f64], noise: Option<&mut SimRng>) -> Result<Vec<f64>, CrossbarError> {
        let (p, m) = match noise {
            Some(rng) => self.vmm_noisy(drive, rng)?,
            None => self.vmm(drive)?,
        };
        differential_current(&p, &m)
    }
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<(), CrossbarError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(CrossbarError::Shape(format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    Ok(())
}

/// Output of the current-buffer subtractor: `I+ - I-`, element-wise.
pub fn differential_current(i_plus: &[f64], i_minus: &[f64]) -> Result<Vec<f64>, CrossbarError> {
    if i_plus.len() != i_minus.len() {
        return Err(CrossbarError::Shape(format!("{} vs {} currents", i_plus.len(), i_minus.len())));
    }
    Ok(i_plus.iter().zip(i_minus).map(|(p, m)| p - m).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// The positive or negative device carries the whole weight; its partner
    /// sits at `g_min`.
    #[default]
    OneSided,
    /// Both devices straddle `g_mid` symmetrically.
    Balanced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub w: Matrix,
    /// Siemens per unit weight.
    pub k: f64,
    pub scheme: Scheme,
}

/// Map weights onto conductance targets `(G+, G-)`.
pub fn compile_weights(spec: &WeightSpec, params: &MemristorParams) -> Result<(Matrix, Matrix), CrossbarError> {
    params.validate()?;
    if !(spec.k.is_finite() && spec.k > 0.0) {
        return Err(CrossbarError::InvalidScale(spec.k));
    }
    let span = params.g_max - params.g_min;
    let (rows, cols) = (spec.w.rows(), spec.w.cols());
    let mut tp = Matrix::zeros(rows, cols);
    let mut tm = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let w = spec.w.get(r, c);
            let needed = w.abs() * spec.k;
            if !w.is_finite() || needed > span * (1.0 + 1e-12) {
                return Err(CrossbarError::Unrepresentable { row: r, col: c, weight: w, needed, span });
            }
            let (p, m) = match spec.scheme {
                Scheme::OneSided if w >= 0.0 => (params.g_min + spec.k * w, params.g_min),
                Scheme::OneSided => (params.g_min, params.g_min + spec.k * -w),
                Scheme::Balanced => {
                    let half = 0.5 * spec.k * w;
                    (params.g_mid() + half, params.g_mid() - half)
                }
            };
            tp.set(r, c, params.clamp(p));
            tm.set(r, c, params.clamp(m));
        }
    }
    Ok((tp, tm))
}

/// Inverse of [`compile_weights`]: `(G+ - G-) / k`.
pub fn decode_weights(g_plus: &Matrix, g_minus: &Matrix, k: f64) -> Matrix {
    Matrix::from_fn(g_plus.rows(), g_plus.cols(), |r, c| (g_plus.get(r, c) - g_minus.get(r, c)) / k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    pub target: f64,
    pub conductance: f64,
    pub pulses: usize,
    /// `|g - target| / target`.
    pub error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProgrammingReport {
    pub cells: Vec<CellReport>,
}

impl ProgrammingReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| !c.converged)
    }

    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.converged)
    }

    pub fn max_error(&self) -> f64 {
        self.cells.iter().map(|c| c.error).fold(0.0, f64::max)
    }

    pub fn total_pulses(&self) -> usize {
        self.cells.iter().map(|c| c.pulses).sum()
    }

    fn failure_summary(&self) -> String {
        let names: Vec<String> = self.failures().map(|c| format!("({},{},{})", c.row, c.col, c.polarity)).collect();
        names.join(" ")
    }
}

impl fmt::Display for ProgrammingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} devices, {} pulses, max rel. error {:.3e}, {} failed",
            self.cells.len(),
            self.total_pulses(),
            self.max_error(),
            self.failures().count()
        )
    }
}

/// Write-verify every device of the array towards its target, row-major,
/// `+` device before `-` device.
///
/// Devices that fail to converge keep the state they reached; the report in
/// the `PartialFailure` error names them.
pub fn program_crossbar(
    xbar: &mut DifferentialCrossbar,
    targets_plus: &Matrix,
    targets_minus: &Matrix,
    wv: &WriteVerify,
    rng: &mut SimRng,
) -> Result<ProgrammingReport, CrossbarError> {
    check_same_shape(targets_plus, targets_minus)?;
    if targets_plus.rows() != xbar.n_in || targets_plus.cols() != xbar.n_out {
        return Err(CrossbarError::Shape(format!(
            "targets {}x{} for a {}x{} crossbar",
            targets_plus.rows(),
            targets_plus.cols(),
            xbar.n_in,
            xbar.n_out
        )));
    }
    let mut report = ProgrammingReport::default();
    for row in 0..xbar.n_in {
        for col in 0..xbar.n_out {
            for (polarity, targets) in [(Polarity::Potentiate, targets_plus), (Polarity::Depress, targets_minus)] {
                let target = targets.get(row, col);
                let dev = xbar.device_mut(polarity, row, col);
                let (state, pulses, converged) = match device::program_target(dev.state, target, wv, &dev.params, rng) {
                    Ok((s, n)) => (s, n, true),
                    Err(DeviceError::Convergence { state, pulses, .. }) => (state, pulses, false),
                    Err(e) => return Err(e.into()),
                };
                dev.state = state;
                report.cells.push(CellReport {
                    row,
                    col,
                    polarity,
                    target,
                    conductance: state.g,
                    pulses,
                    error: (state.g - target).abs() / target,
                    converged,
                });
            }
        }
    }
    if report.all_converged() {
        Ok(report)
    } else {
        Err(CrossbarError::PartialFailure(report))
    }
}
