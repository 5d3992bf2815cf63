//! Pearson correlation, 2×2 odds ratios and a one-predictor logistic fit.

use serde::{Deserialize, Serialize};

/// Pearson's r, or `None` when either series is constant or lengths differ.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A collapsed 2×2 table: predictor × outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoByTwo {
    /// predictor present, outcome success
    pub a: u64,
    /// predictor present, outcome failure
    pub b: u64,
    /// predictor absent, outcome success
    pub c: u64,
    /// predictor absent, outcome failure
    pub d: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub table: TwoByTwo,
    /// `(a/b) / (c/d)`; infinite, zero or NaN when a cell is empty.
    #[serde(with = "nonfinite")]
    pub value: f64,
    pub degenerate: bool,
}

impl TwoByTwo {
    pub fn odds_ratio(&self) -> OddsRatio {
        let (a, b, c, d) = (self.a as f64, self.b as f64, self.c as f64, self.d as f64);
        let (num, den) = (a * d, b * c);
        let value = if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
        OddsRatio {
            table: *self,
            value,
            degenerate: self.a == 0 || self.b == 0 || self.c == 0 || self.d == 0,
        }
    }

    /// Maximum-likelihood fit of `logit P(success) = b0 + b1 * predictor`
    /// by Newton's method on the grouped counts. Returns `(b0, b1)`, or
    /// `None` when the likelihood has no finite maximum.
    pub fn logistic_fit(&self) -> Option<(f64, f64)> {
        if self.a == 0 || self.b == 0 || self.c == 0 || self.d == 0 {
            return None;
        }
        // (predictor, successes, trials)
        let groups = [
            (1.0, self.a as f64, (self.a + self.b) as f64),
            (0.0, self.c as f64, (self.c + self.d) as f64),
        ];
        let (mut b0, mut b1) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(x, y, n) in &groups {
                let p = 1.0 / (1.0 + (-(b0 + b1 * x)).exp());
                let w = n * p * (1.0 - p);
                g0 += y - n * p;
                g1 += (y - n * p) * x;
                h00 += w;
                h01 += w * x;
                h11 += w * x * x;
            }
            let det = h00 * h11 - h01 * h01;
            if det.abs() < f64::MIN_POSITIVE {
                return None;
            }
            let step0 = (h11 * g0 - h01 * g1) / det;
            let step1 = (h00 * g1 - h01 * g0) / det;
            b0 += step0;
            b1 += step1;
            if step0.abs().max(step1.abs()) < 1e-13 {
                break;
            }
        }
        Some((b0, b1))
    }
}

/// JSON has no infinities; they travel as strings.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_small_cases() {
        assert_eq!(pearson(&[0.0, 1.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 0.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
        // x = 1,2,3,4 and y = 1,3,2,4: sxy = 4, sxx = syy = 5
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn odds_ratio_cases() {
        let even = TwoByTwo { a: 10, b: 20, c: 5, d: 10 }.odds_ratio();
        assert_eq!(even.value, 1.0);
        assert!(!even.degenerate);
        let inf = TwoByTwo { a: 3, b: 0, c: 2, d: 5 }.odds_ratio();
        assert!(inf.value.is_infinite() && inf.degenerate);
        let json = serde_json::to_string(&inf).unwrap();
        let back: OddsRatio = serde_json::from_str(&json).unwrap();
        assert_eq!(back.value, f64::INFINITY);
    }

    #[test]
    fn fit_recovers_the_cross_product_ratio() {
        let t = TwoByTwo { a: 2338, b: 223, c: 1039, d: 1909 };
        let (_, b1) = t.logistic_fit().unwrap();
        assert!((b1.exp() - t.odds_ratio().value).abs() < 1e-9);
    }
}
