use nalgebra::{SMatrix, SVector};

use crate::gateway::BBox;

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat48 = SMatrix<f64, 4, 8>;

/// Constant-velocity filter over (center x, center y, aspect w/h, height).
///
/// Process and measurement noise scale with the box height, so behaviour
/// does not depend on the coordinate units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        KalmanFilter { std_weight_position: 1.0 / 20.0, std_weight_velocity: 1.0 / 160.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vec8,
    pub covariance: Mat8,
}

pub fn to_xyah(b: &BBox) -> [f64; 4] {
    let (cx, cy) = b.center();
    [cx, cy, b.width() / b.height(), b.height()]
}

pub fn from_xyah(cx: f64, cy: f64, a: f64, h: f64) -> BBox {
    let h = h.max(1e-9);
    let w = (a * h).max(1e-9);
    BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
}

fn motion() -> Mat8 {
    let mut f = Mat8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> Mat48 {
    let mut h = Mat48::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

impl KalmanFilter {
    pub fn initiate(&self, b: &BBox) -> KalmanState {
        let m = to_xyah(b);
        let h = m[3];
        let (wp, wv) = (self.std_weight_position, self.std_weight_velocity);
        let std = [2.0 * wp * h, 2.0 * wp * h, 1e-2, 2.0 * wp * h, 10.0 * wv * h, 10.0 * wv * h, 1e-5, 10.0 * wv * h];
        let mean = Vec8::from_column_slice(&[m[0], m[1], m[2], m[3], 0.0, 0.0, 0.0, 0.0]);
        KalmanState { mean, covariance: Mat8::from_diagonal(&Vec8::from_iterator(std.iter().map(|s| s * s))) }
    }

    pub fn predict(&self, s: &mut KalmanState) {
        let h = s.mean[3];
        let (wp, wv) = (self.std_weight_position, self.std_weight_velocity);
        let std = [wp * h, wp * h, 1e-2, wp * h, wv * h, wv * h, 1e-5, wv * h];
        let q = Mat8::from_diagonal(&Vec8::from_iterator(std.iter().map(|s| s * s)));
        let f = motion();
        s.mean = f * s.mean;
        s.covariance = f * s.covariance * f.transpose() + q;
    }

    pub fn update(&self, s: &mut KalmanState, b: &BBox) {
        let z = to_xyah(b);
        let z = SVector::<f64, 4>::from_column_slice(&z);
        let h = s.mean[3];
        let wp = self.std_weight_position;
        let std = [wp * h, wp * h, 1e-1, wp * h];
        let r = Mat4::from_diagonal(&SVector::<f64, 4>::from_iterator(std.iter().map(|s| s * s)));
        let hm = observation();
        let projected = hm * s.mean;
        let innovation_cov = hm * s.covariance * hm.transpose() + r;
        let Some(inv) = innovation_cov.try_inverse() else { return };
        let gain = s.covariance * hm.transpose() * inv;
        s.mean += gain * (z - projected);
        s.covariance -= gain * innovation_cov * gain.transpose();
    }

    pub fn bbox(&self, s: &KalmanState) -> BBox {
        from_xyah(s.mean[0], s.mean[1], s.mean[2], s.mean[3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyah_round_trip() {
        let b = BBox::new(0.1, 0.2, 0.3, 0.6);
        let m = to_xyah(&b);
        let back = from_xyah(m[0], m[1], m[2], m[3]);
        assert!(back.approx_eq(&b), "{back:?}");
    }

    #[test]
    fn stationary_box_is_a_fixed_point() {
        let kf = KalmanFilter::default();
        let b = BBox::new(0.4, 0.4, 0.5, 0.6);
        let mut s = kf.initiate(&b);
        for _ in 0..5 {
            kf.predict(&mut s);
            assert!(kf.bbox(&s).approx_eq(&b));
            kf.update(&mut s, &b);
        }
    }

    #[test]
    fn learns_constant_velocity() {
        let kf = KalmanFilter::default();
        let at = |t: f64| BBox::new(0.1 + 0.01 * t, 0.2, 0.2 + 0.01 * t, 0.4);
        let mut s = kf.initiate(&at(0.0));
        for t in 1..20 {
            kf.predict(&mut s);
            kf.update(&mut s, &at(t as f64));
        }
        kf.predict(&mut s);
        let p = kf.bbox(&s);
        assert!((p.x1 - at(20.0).x1).abs() < 1e-3, "{p:?}");
    }
}
