//! Synthetic active device: a 2x2 rational admittance in the rotating dq
//! frame, realized per entry in controllable canonical form and discretized
//! with the same trapezoidal rule as the network. Stands in for converter
//! dynamics: it produces dq-frame coupling (and hence mirror-frequency
//! content in stationary frames) with an exactly known ground truth.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::frames::ReferenceAngle;

use super::EmtError;

/// Real-coefficient rational transfer function, coefficients in ascending
/// powers of s. Must be proper and finite at s = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl RationalTf {
    pub fn constant(g: f64) -> Self {
        Self {
            num: vec![g],
            den: vec![1.0],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn validate(&self, entry: &str) -> Result<(), EmtError> {
        let num_deg = degree(&self.num);
        let den_deg = degree(&self.den);
        if self.den.is_empty() || self.den.iter().all(|&c| c == 0.0) {
            return Err(EmtError::ImproperDevice {
                entry: entry.to_string(),
                reason: "zero denominator".into(),
            });
        }
        if num_deg > den_deg {
            return Err(EmtError::ImproperDevice {
                entry: entry.to_string(),
                reason: format!("numerator degree {num_deg} exceeds denominator degree {den_deg}"),
            });
        }
        if self.den[0] == 0.0 {
            return Err(EmtError::ImproperDevice {
                entry: entry.to_string(),
                reason: "denominator vanishes at s = 0".into(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }
}

fn degree(coeffs: &[f64]) -> usize {
    coeffs
        .iter()
        .rposition(|&c| c != 0.0)
        .unwrap_or(0)
}

fn poly_eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

/// dq-frame admittance matrix [[ydd, ydq], [yqd, yqq]] plus the rotation
/// angle the device uses internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub ydd: RationalTf,
    pub ydq: RationalTf,
    pub yqd: RationalTf,
    pub yqq: RationalTf,
    pub f0: f64,
    #[serde(default)]
    pub theta0: f64,
}

impl DeviceModel {
    pub fn validate(&self) -> Result<(), EmtError> {
        self.ydd.validate("ydd")?;
        self.ydq.validate("ydq")?;
        self.yqd.validate("yqd")?;
        self.yqq.validate("yqq")?;
        if !(self.f0 > 0.0) {
            return Err(EmtError::ImproperDevice {
                entry: "f0".into(),
                reason: format!("fundamental frequency must be positive, got {}", self.f0),
            });
        }
        Ok(())
    }

    pub fn angle(&self) -> ReferenceAngle {
        ReferenceAngle {
            f0: self.f0,
            theta0: self.theta0,
        }
    }

    /// Y_dq evaluated at a complex frequency.
    pub fn eval(&self, s: Complex64) -> [[Complex64; 2]; 2] {
        [
            [self.ydd.eval(s), self.ydq.eval(s)],
            [self.yqd.eval(s), self.yqq.eval(s)],
        ]
    }

    /// Rotating-frame SISO equivalent seen by a co-rotating complex signal:
    /// ((ydd + yqq) + j(yqd - ydq)) / 2.
    pub fn y_rotating(&self, s: Complex64) -> Complex64 {
        let y = self.eval(s);
        0.5 * ((y[0][0] + y[1][1]) + Complex64::i() * (y[1][0] - y[0][1]))
    }

    /// Counter-rotating coupling term ((ydd - yqq) - j(ydq + yqd)) / 2; zero
    /// exactly when the device is rotationally symmetric, in which case no
    /// mirror-frequency response exists.
    pub fn y_coupling(&self, s: Complex64) -> Complex64 {
        let y = self.eval(s);
        0.5 * ((y[0][0] - y[1][1]) - Complex64::i() * (y[0][1] + y[1][0]))
    }
}

/// One entry's state-space realization discretized with the trapezoidal rule:
/// x+ = M x + N (u + u+), y+ = (cN + d) u+ + c (M x + N u).
#[derive(Debug, Clone)]
struct EntryRealization {
    m: DMatrix<f64>,
    n: DVector<f64>,
    c: DVector<f64>,
    g_eff: f64,
    x: DVector<f64>,
}

impl EntryRealization {
    fn new(tf: &RationalTf, dt: f64) -> Self {
        let den_deg = degree(&tf.den);
        let lead = tf.den[den_deg];
        // normalize so the leading denominator coefficient is 1
        let a: Vec<f64> = (0..den_deg).map(|i| tf.den[i] / lead).collect();
        let mut b = vec![0.0; den_deg + 1];
        for (i, &v) in tf.num.iter().enumerate() {
            if i <= den_deg {
                b[i] = v / lead;
            }
        }
        let d = b[den_deg];
        let n_states = den_deg;
        if n_states == 0 {
            return Self {
                m: DMatrix::zeros(0, 0),
                n: DVector::zeros(0),
                c: DVector::zeros(0),
                g_eff: d,
                x: DVector::zeros(0),
            };
        }
        // controllable canonical form
        let mut a_mat = DMatrix::zeros(n_states, n_states);
        for i in 0..n_states - 1 {
            a_mat[(i, i + 1)] = 1.0;
        }
        for j in 0..n_states {
            a_mat[(n_states - 1, j)] = -a[j];
        }
        let mut b_vec = DVector::zeros(n_states);
        b_vec[n_states - 1] = 1.0;
        let c_vec = DVector::from_fn(n_states, |i, _| b[i] - d * a[i]);
        let half = 0.5 * dt;
        let e = DMatrix::identity(n_states, n_states) - &a_mat * half;
        let e_inv = e.try_inverse().expect("trapezoidal step matrix invertible");
        let m = &e_inv * (DMatrix::identity(n_states, n_states) + &a_mat * half);
        let n = &e_inv * (b_vec * half);
        let g_eff = c_vec.dot(&n) + d;
        Self {
            m,
            n,
            c: c_vec,
            g_eff,
            x: DVector::zeros(n_states),
        }
    }

    /// c (M x + N u_prev): known part of the next output.
    fn history(&self, u_prev: f64) -> f64 {
        if self.x.is_empty() {
            return 0.0;
        }
        self.c.dot(&(&self.m * &self.x + &self.n * u_prev))
    }

    fn advance(&mut self, u_prev: f64, u_new: f64) {
        if self.x.is_empty() {
            return;
        }
        self.x = &self.m * &self.x + &self.n * (u_prev + u_new);
    }
}

/// Runtime state of one device instance inside a simulation.
#[derive(Debug, Clone)]
pub(crate) struct DeviceState {
    entries: [[EntryRealization; 2]; 2],
    pub g_dq: [[f64; 2]; 2],
    u_prev: [f64; 2],
    pub angle: ReferenceAngle,
}

impl DeviceState {
    pub fn new(model: &DeviceModel, dt: f64) -> Result<Self, EmtError> {
        model.validate()?;
        let entries = [
            [
                EntryRealization::new(&model.ydd, dt),
                EntryRealization::new(&model.ydq, dt),
            ],
            [
                EntryRealization::new(&model.yqd, dt),
                EntryRealization::new(&model.yqq, dt),
            ],
        ];
        let g_dq = [
            [entries[0][0].g_eff, entries[0][1].g_eff],
            [entries[1][0].g_eff, entries[1][1].g_eff],
        ];
        Ok(Self {
            entries,
            g_dq,
            u_prev: [0.0, 0.0],
            angle: model.angle(),
        })
    }

    /// Known part of the next dq output current.
    pub fn history_dq(&self) -> [f64; 2] {
        let mut h = [0.0, 0.0];
        for i in 0..2 {
            for j in 0..2 {
                h[i] += self.entries[i][j].history(self.u_prev[j]);
            }
        }
        h
    }

    pub fn advance(&mut self, u_new: [f64; 2]) {
        for i in 0..2 {
            for j in 0..2 {
                self.entries[i][j].advance(self.u_prev[j], u_new[j]);
            }
        }
        self.u_prev = u_new;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rational_eval_and_validation() {
        let tf = RationalTf {
            num: vec![2.0],
            den: vec![1.0, 0.5],
        };
        let y = tf.eval(Complex64::new(0.0, 2.0));
        // 2 / (1 + j) = 1 - j
        assert_relative_eq!(y.re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(y.im, -1.0, epsilon = 1e-12);
        assert!(tf.validate("ydd").is_ok());
        let improper = RationalTf {
            num: vec![0.0, 0.0, 1.0],
            den: vec![1.0, 1.0],
        };
        assert!(improper.validate("ydd").is_err());
        let pole_at_zero = RationalTf {
            num: vec![1.0],
            den: vec![0.0, 1.0],
        };
        assert!(pole_at_zero.validate("ydd").is_err());
    }

    #[test]
    fn discrete_realization_tracks_first_order_response() {
        // y = 0.5 / (1 + 0.01 s): step response 0.5 (1 - e^{-t/0.01})
        let tf = RationalTf {
            num: vec![0.5],
            den: vec![1.0, 0.01],
        };
        let dt = 1e-5;
        let mut e = EntryRealization::new(&tf, dt);
        let mut y = 0.0;
        let steps = (0.05 / dt) as usize;
        for k in 0..steps {
            let u_prev = if k == 0 { 0.0 } else { 1.0 };
            y = e.g_eff * 1.0 + e.history(u_prev);
            e.advance(u_prev, 1.0);
        }
        let want = 0.5 * (1.0 - (-(0.05_f64) / 0.01).exp());
        assert_relative_eq!(y, want, epsilon = 1e-5);
    }

    #[test]
    fn constant_matrix_has_no_states() {
        let model = DeviceModel {
            ydd: RationalTf::constant(0.3),
            ydq: RationalTf::zero(),
            yqd: RationalTf::zero(),
            yqq: RationalTf::constant(0.3),
            f0: 50.0,
            theta0: 0.0,
        };
        let st = DeviceState::new(&model, 1e-5).unwrap();
        assert_eq!(st.g_dq[0][0], 0.3);
        assert_eq!(st.history_dq(), [0.0, 0.0]);
    }

    #[test]
    fn coupling_term_vanishes_for_symmetric_device() {
        let sym = DeviceModel {
            ydd: RationalTf {
                num: vec![1.0, 0.2],
                den: vec![1.0, 0.05],
            },
            ydq: RationalTf::constant(0.4),
            yqd: RationalTf::constant(-0.4),
            yqq: RationalTf {
                num: vec![1.0, 0.2],
                den: vec![1.0, 0.05],
            },
            f0: 50.0,
            theta0: 0.0,
        };
        let s = Complex64::new(0.0, 100.0);
        assert!(sym.y_coupling(s).norm() < 1e-15);
        let asym = DeviceModel {
            ydd: RationalTf::constant(0.5),
            ydq: RationalTf::zero(),
            yqd: RationalTf::zero(),
            yqq: RationalTf::constant(0.2),
            f0: 50.0,
            theta0: 0.0,
        };
        assert_relative_eq!(asym.y_coupling(s).re, 0.15);
        assert_relative_eq!(asym.y_rotating(s).re, 0.35);
    }
}
