//! Lambert conformal conic projection (spherical earth) and planar distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Geographic coordinates in degrees (longitude negative west).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    pub lon_deg: T,
    pub lat_deg: T,
}

impl<T: Real> GeoPoint<T> {
    pub fn new(lon_deg: T, lat_deg: T) -> Result<Self> {
        if !lon_deg.finite() || !lat_deg.finite() {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        if lon_deg < T::lit(-180.0) || lon_deg > T::lit(180.0) {
            return Err(Error::InvalidInput(format!("longitude {lon_deg} outside [-180, 180]")));
        }
        if lat_deg < T::lit(-90.0) || lat_deg > T::lit(90.0) {
            return Err(Error::InvalidInput(format!("latitude {lat_deg} outside [-90, 90]")));
        }
        Ok(Self { lon_deg, lat_deg })
    }
}

/// Planar coordinates in km. Used for both projected geographic space and the
/// deformed space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjPoint<T> {
    pub s1: T,
    pub s2: T,
}

impl<T: Real> ProjPoint<T> {
    pub fn new(s1: T, s2: T) -> Self {
        Self { s1, s2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LccParams<T> {
    pub ref_lon: T,
    pub ref_lat: T,
    pub std_parallel_1: T,
    pub std_parallel_2: T,
    /// Sphere radius in km.
    pub earth_radius: T,
}

impl<T: Real> LccParams<T> {
    pub const DEFAULT_PARALLELS: (f64, f64) = (45.0, 49.0);
    pub const DEFAULT_RADIUS_KM: f64 = 6371.0;

    pub fn new(ref_lon: T, ref_lat: T, std_parallel_1: T, std_parallel_2: T, earth_radius: T) -> Result<Self> {
        let p = Self {
            ref_lon,
            ref_lat,
            std_parallel_1,
            std_parallel_2,
            earth_radius,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default parallels and radius with the reference point at the centroid
    /// of `points`.
    pub fn centered_on(points: &[GeoPoint<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("cannot center a projection on zero points".into()));
        }
        let n = T::from_usize_lossy(points.len());
        let lon = points.iter().fold(T::zero(), |a, p| a + p.lon_deg) / n;
        let lat = points.iter().fold(T::zero(), |a, p| a + p.lat_deg) / n;
        let (sp1, sp2) = Self::DEFAULT_PARALLELS;
        Self::new(lon, lat, T::lit(sp1), T::lit(sp2), T::lit(Self::DEFAULT_RADIUS_KM))
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.ref_lon,
            self.ref_lat,
            self.std_parallel_1,
            self.std_parallel_2,
            self.earth_radius,
        ];
        if vals.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidInput("non-finite projection parameter".into()));
        }
        let ninety = T::lit(90.0);
        for sp in [self.std_parallel_1, self.std_parallel_2] {
            if sp <= -ninety || sp >= ninety {
                return Err(Error::InvalidInput(format!("standard parallel {sp} not in (-90, 90)")));
            }
        }
        if (self.std_parallel_1 - self.std_parallel_2).abs() < T::lit(1e-9) {
            return Err(Error::InvalidInput("standard parallels must be distinct".into()));
        }
        if self.earth_radius <= T::zero() {
            return Err(Error::InvalidInput("earth radius must be positive".into()));
        }
        if self.ref_lat.abs() >= ninety {
            return Err(Error::ProjectionSingularity {
                lat: self.ref_lat.as_f64(),
            });
        }
        Ok(())
    }

    /// Precomputes the cone constants.
    pub fn projection(&self) -> Result<Lcc<T>> {
        self.validate()?;
        let phi1 = self.std_parallel_1.to_rad();
        let phi2 = self.std_parallel_2.to_rad();
        let quarter = T::frac_pi_4();
        let half = T::lit(0.5);
        let t = |phi: T| (quarter + phi * half).tan();
        let n = (phi1.cos() / phi2.cos()).ln() / (t(phi2) / t(phi1)).ln();
        let f = phi1.cos() * t(phi1).powf(n) / n;
        let rf = self.earth_radius * f;
        let rho0 = rf / t(self.ref_lat.to_rad()).powf(n);
        Ok(Lcc {
            n,
            rf,
            rho0,
            lon0: self.ref_lon,
        })
    }
}

/// Cone constants of a configured Lambert conformal conic projection.
#[derive(Debug, Clone, Copy)]
pub struct Lcc<T> {
    n: T,
    rf: T,
    rho0: T,
    lon0: T,
}

impl<T: Real> Lcc<T> {
    pub fn project(&self, p: &GeoPoint<T>) -> Result<ProjPoint<T>> {
        let ninety = T::lit(90.0);
        if (p.lat_deg.abs() - ninety).abs() < T::lit(1e-9) || p.lat_deg.abs() > ninety {
            return Err(Error::ProjectionSingularity {
                lat: p.lat_deg.as_f64(),
            });
        }
        let phi = p.lat_deg.to_rad();
        let rho = self.rf / (T::frac_pi_4() + phi * T::lit(0.5)).tan().powf(self.n);
        let mut dlon = p.lon_deg - self.lon0;
        let full = T::lit(360.0);
        if dlon > T::lit(180.0) {
            dlon -= full;
        } else if dlon < T::lit(-180.0) {
            dlon += full;
        }
        let theta = self.n * dlon.to_rad();
        let s1 = rho * theta.sin();
        let s2 = self.rho0 - rho * theta.cos();
        if !s1.finite() || !s2.finite() {
            return Err(Error::ProjectionSingularity {
                lat: p.lat_deg.as_f64(),
            });
        }
        Ok(ProjPoint { s1, s2 })
    }
}

/// Projects a geographic point to km with the reference point at the origin.
pub fn project_lcc<T: Real>(p: &GeoPoint<T>, params: &LccParams<T>) -> Result<ProjPoint<T>> {
    params.projection()?.project(p)
}

#[inline]
pub fn euclidean_distance<T: Real>(a: &ProjPoint<T>, b: &ProjPoint<T>) -> T {
    let d1 = a.s1 - b.s1;
    let d2 = a.s2 - b.s2;
    (d1 * d1 + d2 * d2).sqrt()
}

/// Symmetric matrix of pairwise distances.
pub fn distance_matrix<T: Real>(points: &[ProjPoint<T>]) -> nalgebra::DMatrix<T> {
    let n = points.len();
    let mut d = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclidean_distance(&points[i], &points[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pnw() -> LccParams<f64> {
        LccParams::new(-120.5, 45.0, 45.0, 49.0, 6371.0).unwrap()
    }

    /// Straight transcription of the spherical two-parallel LCC formulas,
    /// evaluated independently of `Lcc`.
    fn textbook_lcc(lon: f64, lat: f64, p: &LccParams<f64>) -> (f64, f64) {
        use std::f64::consts::FRAC_PI_4;
        let r = |d: f64| d.to_radians();
        let (p1, p2, p0) = (r(p.std_parallel_1), r(p.std_parallel_2), r(p.ref_lat));
        let n = (p1.cos() / p2.cos()).ln() / ((FRAC_PI_4 + p2 / 2.0).tan() / (FRAC_PI_4 + p1 / 2.0).tan()).ln();
        let f = p1.cos() * (FRAC_PI_4 + p1 / 2.0).tan().powf(n) / n;
        let rho = p.earth_radius * f / (FRAC_PI_4 + r(lat) / 2.0).tan().powf(n);
        let rho0 = p.earth_radius * f / (FRAC_PI_4 + p0 / 2.0).tan().powf(n);
        let th = n * r(lon - p.ref_lon);
        (rho * th.sin(), rho0 - rho * th.cos())
    }

    /// Inverse projection used as a round-trip oracle.
    fn inverse_lcc(x: f64, y: f64, p: &LccParams<f64>) -> (f64, f64) {
        use std::f64::consts::FRAC_PI_4;
        let r = |d: f64| d.to_radians();
        let (p1, p2, p0) = (r(p.std_parallel_1), r(p.std_parallel_2), r(p.ref_lat));
        let n = (p1.cos() / p2.cos()).ln() / ((FRAC_PI_4 + p2 / 2.0).tan() / (FRAC_PI_4 + p1 / 2.0).tan()).ln();
        let f = p1.cos() * (FRAC_PI_4 + p1 / 2.0).tan().powf(n) / n;
        let rho0 = p.earth_radius * f / (FRAC_PI_4 + p0 / 2.0).tan().powf(n);
        let dy = rho0 - y;
        let rho = n.signum() * (x * x + dy * dy).sqrt();
        let theta = (n.signum() * x).atan2(n.signum() * dy);
        let lat = 2.0 * (p.earth_radius * f / rho).powf(1.0 / n).atan() - std::f64::consts::FRAC_PI_2;
        let lon = p.ref_lon + (theta / n).to_degrees();
        (lon, lat.to_degrees())
    }

    #[test]
    fn reference_point_maps_to_origin() {
        let p = pnw();
        let o = project_lcc(&GeoPoint::new(-120.5, 45.0).unwrap(), &p).unwrap();
        assert!(o.s1.abs() < 1e-9 && o.s2.abs() < 1e-9);
    }

    #[test]
    fn mirror_points_about_central_meridian() {
        let p = pnw();
        let a = project_lcc(&GeoPoint::new(-123.0, 47.0).unwrap(), &p).unwrap();
        let b = project_lcc(&GeoPoint::new(-118.0, 47.0).unwrap(), &p).unwrap();
        assert!((a.s1 + b.s1).abs() < 1e-9);
        assert!((a.s2 - b.s2).abs() < 1e-9);
    }

    #[test]
    fn matches_textbook_formula() {
        let p = pnw();
        let got = project_lcc(&GeoPoint::new(-120.5, 47.5).unwrap(), &p).unwrap();
        let (x, y) = textbook_lcc(-120.5, 47.5, &p);
        assert!((got.s1 - x).abs() < 1e-9);
        assert!((got.s2 - y).abs() < 1e-9);
        // on the central meridian 2.5 degrees north of the reference: ~278 km
        assert!(got.s1.abs() < 1e-9);
        assert!((got.s2 - 278.0).abs() < 2.0, "{}", got.s2);
        for (lon, lat) in [(-124.0, 42.2), (-116.3, 48.9), (-119.0, 44.0)] {
            let got = project_lcc(&GeoPoint::new(lon, lat).unwrap(), &p).unwrap();
            let (x, y) = textbook_lcc(lon, lat, &p);
            assert!((got.s1 - x).abs() < 1e-8 && (got.s2 - y).abs() < 1e-8);
        }
    }

    #[test]
    fn pole_is_a_singularity() {
        let p = pnw();
        let err = project_lcc(&GeoPoint::new(10.0, -90.0).unwrap(), &p).unwrap_err();
        assert!(err.to_string().contains("projection singularity"));
        assert!(project_lcc(&GeoPoint::new(10.0, 90.0).unwrap(), &p).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LccParams::new(0.0, 45.0, 45.0, 45.0, 6371.0).is_err());
        assert!(LccParams::new(0.0, 45.0, 45.0, 90.0, 6371.0).is_err());
        assert!(LccParams::new(0.0, 45.0, 45.0, 49.0, 0.0).is_err());
        assert!(GeoPoint::new(181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -91.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let o = ProjPoint::new(0.0, 0.0);
        assert_eq!(euclidean_distance(&o, &o), 0.0);
        assert_eq!(euclidean_distance(&o, &ProjPoint::new(3.0, 4.0)), 5.0);
        assert_eq!(
            euclidean_distance(&ProjPoint::new(1.0, 2.0), &ProjPoint::new(4.0, 6.0)),
            5.0
        );
    }

    #[test]
    fn works_in_single_precision() {
        let p = LccParams::<f32>::new(-120.5, 45.0, 45.0, 49.0, 6371.0).unwrap();
        let got = project_lcc(&GeoPoint::new(-120.5f32, 47.5).unwrap(), &p).unwrap();
        let (_, y) = textbook_lcc(-120.5, 47.5, &pnw());
        assert!((got.s2 as f64 - y).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn round_trip_through_inverse(lon in -125.0f64..-110.0, lat in 40.0f64..50.0) {
            let p = pnw();
            let q = project_lcc(&GeoPoint::new(lon, lat).unwrap(), &p).unwrap();
            let (lon2, lat2) = inverse_lcc(q.s1, q.s2, &p);
            prop_assert!((lon - lon2).abs() < 1e-6);
            prop_assert!((lat - lat2).abs() < 1e-6);
        }

        #[test]
        fn triangle_inequality(a in prop::array::uniform6(-1e3f64..1e3)) {
            let (p, q, r) = (ProjPoint::new(a[0], a[1]), ProjPoint::new(a[2], a[3]), ProjPoint::new(a[4], a[5]));
            let pq = euclidean_distance(&p, &q);
            prop_assert!(euclidean_distance(&p, &r) <= pq + euclidean_distance(&q, &r) + 1e-9);
            prop_assert!((pq - euclidean_distance(&q, &p)).abs() == 0.0);
            prop_assert!(pq >= 0.0);
        }
    }
}
