use num_complex::Complex64;

use crate::error::{param_err, Result};

/// Polarisation branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pol {
    X,
    Y,
}

impl Pol {
    pub const BOTH: [Pol; 2] = [Pol::X, Pol::Y];

    pub fn index(self) -> usize {
        match self {
            Pol::X => 0,
            Pol::Y => 1,
        }
    }
}

/// Dual-polarisation complex baseband samples at a fixed sample rate.
///
/// Both branches always have the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct IqStream {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sample_rate: f64,
}

impl IqStream {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if x.len() != y.len() {
            return param_err(format!(
                "polarisation lengths differ: x={} y={}",
                x.len(),
                y.len()
            ));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return param_err(format!("sample rate must be positive, got {sample_rate}"));
        }
        Ok(Self { x, y, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self {
            x: vec![Complex64::new(0.0, 0.0); len],
            y: vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn pol(&self, pol: Pol) -> &[Complex64] {
        match pol {
            Pol::X => &self.x,
            Pol::Y => &self.y,
        }
    }

    pub fn pol_mut(&mut self, pol: Pol) -> &mut Vec<Complex64> {
        match pol {
            Pol::X => &mut self.x,
            Pol::Y => &mut self.y,
        }
    }

    /// Total energy over both polarisations.
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|s| s.norm_sqr()).sum()
    }

    /// Mean power per sample of one branch.
    pub fn power(&self, pol: Pol) -> f64 {
        let s = self.pol(pol);
        if s.is_empty() {
            return 0.0;
        }
        s.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64
    }

    /// Applies the same per-branch transform to both polarisations.
    pub fn map_pols(mut self, mut f: impl FnMut(&mut Vec<Complex64>)) -> Self {
        f(&mut self.x);
        f(&mut self.y);
        self
    }

    /// Samples `[start, start + len)` of both branches, zero-filled outside the stream.
    pub fn window(&self, start: isize, len: usize) -> IqStream {
        let grab = |s: &[Complex64]| -> Vec<Complex64> {
            (0..len as isize)
                .map(|i| {
                    let n = start + i;
                    if n >= 0 && (n as usize) < s.len() {
                        s[n as usize]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        };
        IqStream {
            x: grab(&self.x),
            y: grab(&self.y),
            sample_rate: self.sample_rate,
        }
    }

    /// Largest per-sample deviation between two streams over their common length.
    pub fn max_abs_diff(&self, other: &IqStream) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unequal_lengths() {
        let r = IqStream::new(vec![Complex64::new(1.0, 0.0)], vec![], 1.0);
        assert!(r.is_err());
    }

    #[test]
    fn window_zero_fills_outside() {
        let s = IqStream::new(
            vec![Complex64::new(1.0, 0.0); 3],
            vec![Complex64::new(2.0, 0.0); 3],
            1.0,
        )
        .unwrap();
        let w = s.window(-1, 5);
        assert_eq!(w.x[0], Complex64::new(0.0, 0.0));
        assert_eq!(w.x[1], Complex64::new(1.0, 0.0));
        assert_eq!(w.y[3], Complex64::new(2.0, 0.0));
        assert_eq!(w.y[4], Complex64::new(0.0, 0.0));
    }
}
