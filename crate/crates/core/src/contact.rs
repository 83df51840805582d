//! Contact detection, local contact frames, and the lifting of local
//! directions into generalized (3 n_b) vectors.
//!
//! For a pair contact between bodies `i < j` the normal points from `i`
//! toward `j`, and the local force acts with `+` sign on `j` and `-` sign on
//! `i`. A wall contact behaves like a pair contact whose `i` side is an
//! immovable body: its normal points from the wall into the container and
//! only the `+` block on the moving body is placed.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::linsys::SparseMatrix;
use crate::state::BodyState;

pub type Vec3 = Vector3<f64>;

/// Which bodies a contact couples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pairing {
    Bodies { i: usize, j: usize },
    Wall { body: usize },
}

impl Pairing {
    /// Lexicographic ordering key; the wall sorts after every partner body.
    pub fn sort_key(&self) -> (usize, usize) {
        match *self {
            Pairing::Bodies { i, j } => (i, j),
            Pairing::Wall { body } => (body, usize::MAX),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contact {
    pub pairing: Pairing,
    pub normal: Vec3,
    pub tangents: [Vec3; 2],
    /// Balanced directions spanning the contact plane (the friction cone base).
    pub directions: Vec<Vec3>,
    /// Signed separation; negative means overlap.
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
    pub n_bodies: usize,
    pub cone_directions: usize,
    /// `3 n_b x n_c`, column `k` is `l2g(k, normal_k)`.
    pub d_normal: SparseMatrix,
    /// `3 n_b x s n_c`, block column `k` holds `l2g(k, direction_{k,l})`.
    pub d_tangent: SparseMatrix,
}

impl ContactSet {
    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }
}

/// Deterministic orthonormal basis of the plane normal to `normal`.
///
/// Starts from the coordinate axis least aligned with the normal (lowest
/// index on ties), orthogonalizes it, and completes with `normal x t1`, so
/// `(t1, t2, normal)` is right-handed.
pub fn build_tangent_frame(normal: &Vec3) -> Result<(Vec3, Vec3)> {
    if ((normal.norm() - 1.0).abs()) > 1e-12 {
        return Err(Error::invalid(format!(
            "contact normal must be a unit vector (norm {})",
            normal.norm()
        )));
    }
    let mut axis = 0;
    for k in 1..3 {
        if normal[k].abs() < normal[axis].abs() {
            axis = k;
        }
    }
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let t1 = (e - normal * normal[axis]).normalize();
    let t2 = normal.cross(&t1);
    Ok((t1, t2))
}

/// The `s` directions `cos(2 pi l / s) t1 + sin(2 pi l / s) t2`.
///
/// The second half is the exact negation of the first, so the set is
/// balanced bit-for-bit.
pub fn linearize_cone(t1: &Vec3, t2: &Vec3, s: usize) -> Result<Vec<Vec3>> {
    if s < 4 || s % 2 != 0 {
        return Err(Error::invalid(format!(
            "cone direction count must be even and >= 4 (got {s})"
        )));
    }
    let half: Vec<Vec3> = (0..s / 2)
        .map(|l| {
            let angle = 2.0 * PI * l as f64 / s as f64;
            t1 * angle.cos() + t2 * angle.sin()
        })
        .collect();
    Ok(half.iter().copied().chain(half.iter().map(|d| -d)).collect())
}

fn make_contact(pairing: Pairing, normal: Vec3, gap: f64, s: usize) -> Result<Contact> {
    let (t1, t2) = build_tangent_frame(&normal)?;
    let directions = linearize_cone(&t1, &t2, s)?;
    Ok(Contact {
        pairing,
        normal,
        tangents: [t1, t2],
        directions,
        gap,
    })
}

/// All pairs within `r_i + r_j + eps` of touching, plus bodies within `eps`
/// of the container wall. `eps` is `1e-9` times the mean radius.
pub fn detect_contacts(state: &BodyState, config: &SimConfig) -> Result<Vec<Contact>> {
    detect(state, None, config)
}

/// Like [`detect_contacts`], but the margin of each pair is widened by the
/// distance the bodies can close within one step at the given velocities,
/// so every contact that may occur during the step is reported.
pub fn detect_contacts_swept(
    state: &BodyState,
    velocities: &[f64],
    config: &SimConfig,
) -> Result<Vec<Contact>> {
    if velocities.len() != state.positions.len() {
        return Err(Error::invalid("velocity vector has the wrong length"));
    }
    detect(state, Some(velocities), config)
}

fn detect(state: &BodyState, sweep: Option<&[f64]>, config: &SimConfig) -> Result<Vec<Contact>> {
    let n = state.n_bodies();
    if n == 0 {
        return Ok(Vec::new());
    }
    let s = config.cone_directions;
    let mean_radius = state.radii.iter().sum::<f64>() / n as f64;
    let eps = 1e-9 * mean_radius;
    let h = config.timestep;
    let vel = |i: usize| match sweep {
        Some(v) => Vec3::from_column_slice(&v[3 * i..3 * i + 3]),
        None => Vec3::zeros(),
    };
    let mut contacts = Vec::new();
    for i in 0..n {
        let pi = state.position(i);
        let vi = vel(i);
        for j in i + 1..n {
            let delta = state.position(j) - pi;
            let dist = delta.norm();
            let reach = state.radii[i] + state.radii[j];
            let margin = eps + h * (vel(j) - vi).norm();
            if dist > reach + margin {
                continue;
            }
            if dist < 1e-12 {
                return Err(Error::DegenerateContact { i, j });
            }
            contacts.push(make_contact(
                Pairing::Bodies { i, j },
                delta / dist,
                dist - reach,
                s,
            )?);
        }
        if let Some(c) = &config.container {
            let offset = pi - Vec3::from(c.center);
            let dist = offset.norm();
            let margin = eps + h * vi.norm();
            if dist < c.radius - state.radii[i] - margin {
                continue;
            }
            if dist < 1e-12 {
                return Err(Error::DegenerateContact { i, j: i });
            }
            contacts.push(make_contact(
                Pairing::Wall { body: i },
                -offset / dist,
                c.radius - state.radii[i] - dist,
                s,
            )?);
        }
    }
    contacts.sort_by_key(|c| c.pairing.sort_key());
    Ok(contacts)
}

/// Lifts a local 3-vector of a contact into a generalized vector:
/// `-y` on body `i`, `+y` on body `j` (only `+y` on the body of a wall contact).
pub fn l2g(contact: &Contact, y: &Vec3, n_bodies: usize) -> Vec<f64> {
    let mut z = vec![0.0; 3 * n_bodies];
    for (body, sign) in l2g_blocks(contact) {
        for k in 0..3 {
            z[3 * body + k] = sign * y[k];
        }
    }
    z
}

fn l2g_blocks(contact: &Contact) -> impl Iterator<Item = (usize, f64)> {
    let blocks: [Option<(usize, f64)>; 2] = match contact.pairing {
        Pairing::Bodies { i, j } => [Some((i, -1.0)), Some((j, 1.0))],
        Pairing::Wall { body } => [Some((body, 1.0)), None],
    };
    blocks.into_iter().flatten()
}

fn push_lifted(triplets: &mut Vec<(usize, usize, f64)>, contact: &Contact, y: &Vec3, col: usize) {
    for (body, sign) in l2g_blocks(contact) {
        for k in 0..3 {
            triplets.push((3 * body + k, col, sign * y[k]));
        }
    }
}

pub fn assemble_direction_matrices(
    contacts: Vec<Contact>,
    n_bodies: usize,
    cone_directions: usize,
) -> Result<ContactSet> {
    let rows = 3 * n_bodies;
    let mut normal_triplets = Vec::with_capacity(6 * contacts.len());
    let mut tangent_triplets = Vec::with_capacity(6 * cone_directions * contacts.len());
    for (k, c) in contacts.iter().enumerate() {
        if c.directions.len() != cone_directions {
            return Err(Error::invalid(format!(
                "contact {k} has {} cone directions, expected {cone_directions}",
                c.directions.len()
            )));
        }
        push_lifted(&mut normal_triplets, c, &c.normal, k);
        for (l, d) in c.directions.iter().enumerate() {
            push_lifted(&mut tangent_triplets, c, d, k * cone_directions + l);
        }
    }
    let d_normal = SparseMatrix::from_triplets(rows, contacts.len(), normal_triplets)?;
    let d_tangent =
        SparseMatrix::from_triplets(rows, cone_directions * contacts.len(), tangent_triplets)?;
    Ok(ContactSet {
        contacts,
        n_bodies,
        cone_directions,
        d_normal,
        d_tangent,
    })
}

/// `d_{k,normal}^T v`: positive when the contact is separating.
pub fn relative_normal_velocity(contact: &Contact, v: &[f64]) -> f64 {
    l2g_blocks(contact)
        .map(|(body, sign)| {
            sign * (0..3)
                .map(|k| contact.normal[k] * v[3 * body + k])
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Container;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free_config() -> SimConfig {
        SimConfig {
            container: None,
            ..SimConfig::default()
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn separated_spheres_have_no_contact() {
        let s = BodyState::at_rest(&[[0.0; 3], [3.0, 0.0, 0.0]], 1.0, 1.0).unwrap();
        assert!(detect_contacts(&s, &free_config()).unwrap().is_empty());
    }

    #[test]
    fn touching_spheres_give_one_contact() {
        let s = BodyState::at_rest(&[[0.0; 3], [2.0, 0.0, 0.0]], 1.0, 1.0).unwrap();
        let c = detect_contacts(&s, &free_config()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].pairing, Pairing::Bodies { i: 0, j: 1 });
        assert_eq!(c[0].normal, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(c[0].gap, 0.0);
    }

    #[test]
    fn wall_contact_points_inward() {
        let s = BodyState::at_rest(&[[0.0, 0.0, -9.0]], 1.0, 1.0).unwrap();
        let config = SimConfig {
            container: Some(Container {
                center: [0.0; 3],
                radius: 10.0,
            }),
            ..SimConfig::default()
        };
        let c = detect_contacts(&s, &config).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].pairing, Pairing::Wall { body: 0 });
        assert_eq!(c[0].normal, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn coincident_centers_are_degenerate() {
        let s = BodyState::at_rest(&[[1.0; 3], [1.0; 3]], 1.0, 1.0).unwrap();
        assert!(matches!(
            detect_contacts(&s, &free_config()),
            Err(Error::DegenerateContact { i: 0, j: 1 })
        ));
    }

    #[test]
    fn sweep_margin_catches_approaching_pairs() {
        let s = BodyState::at_rest(&[[0.0; 3], [2.01, 0.0, 0.0]], 1.0, 1.0).unwrap();
        let config = SimConfig {
            timestep: 1e-2,
            ..free_config()
        };
        assert!(detect_contacts(&s, &config).unwrap().is_empty());
        let v = [1.0, 0.0, 0.0, -1.0, 0.0, 0.0];
        let c = detect_contacts_swept(&s, &v, &config).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].gap - 0.01).abs() < 1e-12);
    }

    #[test]
    fn detection_order_is_lexicographic() {
        let centers = [[0.0, 0.0, -8.9], [2.0, 0.0, -8.9], [0.0, 2.0, -8.9], [9.0, 0.0, 0.0]];
        let s = BodyState::at_rest(&centers, 1.0, 1.0).unwrap();
        let c = detect_contacts(&s, &SimConfig::default()).unwrap();
        let keys: Vec<_> = c.iter().map(|c| c.pairing.sort_key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(c.iter().any(|c| c.pairing == Pairing::Wall { body: 3 }));
    }

    #[test]
    fn detection_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let centers: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)])
            .collect();
        let perm: Vec<usize> = (0..n).rev().collect();
        let permuted: Vec<[f64; 3]> = perm.iter().map(|&p| centers[p]).collect();
        let a = detect_contacts(&BodyState::at_rest(&centers, 1.0, 1.0).unwrap(), &free_config())
            .unwrap();
        let b = detect_contacts(&BodyState::at_rest(&permuted, 1.0, 1.0).unwrap(), &free_config())
            .unwrap();
        assert!(!a.is_empty());
        let canon = |pairs: Vec<(usize, usize)>| {
            let mut p: Vec<_> = pairs.into_iter().map(|(i, j)| (i.min(j), i.max(j))).collect();
            p.sort();
            p
        };
        let pa = canon(a.iter().map(|c| c.pairing.sort_key()).collect());
        let pb = canon(
            b.iter()
                .map(|c| {
                    let (i, j) = c.pairing.sort_key();
                    (perm[i], perm[j])
                })
                .collect(),
        );
        assert_eq!(pa, pb);
    }

    #[test]
    fn axis_aligned_frame() {
        let (t1, t2) = build_tangent_frame(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(t1, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(t2, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn frame_is_right_handed() {
        let nu = Vec3::new(1.0, 0.0, 0.0);
        let (t1, t2) = build_tangent_frame(&nu).unwrap();
        assert!((t1.cross(&t2) - nu).norm() < 1e-15);
    }

    #[test]
    fn non_unit_normal_rejected() {
        assert!(build_tangent_frame(&Vec3::new(0.0, 0.0, 2.0)).is_err());
    }

    #[test]
    fn random_frames_are_orthonormal_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let nu = random_unit(&mut rng);
            let (t1, t2) = build_tangent_frame(&nu).unwrap();
            assert!(t1.dot(&nu).abs() < 1e-12);
            assert!(t2.dot(&nu).abs() < 1e-12);
            assert!(t1.dot(&t2).abs() < 1e-12);
            assert!((t1.norm() - 1.0).abs() < 1e-12);
            assert!((t2.norm() - 1.0).abs() < 1e-12);
            assert!((t1.cross(&t2) - nu).norm() < 1e-12);
            assert_eq!(build_tangent_frame(&nu).unwrap(), (t1, t2));
        }
    }

    #[test]
    fn square_cone() {
        let d = linearize_cone(&Vec3::x(), &Vec3::y(), 4).unwrap();
        let expect = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ];
        for (a, b) in d.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(linearize_cone(&Vec3::x(), &Vec3::y(), 5).is_err());
        assert!(linearize_cone(&Vec3::x(), &Vec3::y(), 2).is_err());
    }

    #[test]
    fn cone_is_balanced_and_in_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in [4, 6, 8, 12, 16] {
            let nu = random_unit(&mut rng);
            let (t1, t2) = build_tangent_frame(&nu).unwrap();
            let d = linearize_cone(&t1, &t2, s).unwrap();
            assert_eq!(d.len(), s);
            for dl in &d {
                assert!(dl.dot(&nu).abs() < 1e-12);
                assert!((dl.norm() - 1.0).abs() < 1e-12);
                assert!(d.iter().any(|other| *other == -dl));
            }
        }
    }

    #[test]
    fn cone_angular_covering_is_pi_over_s() {
        for s in [4usize, 6, 8, 10] {
            let d = linearize_cone(&Vec3::x(), &Vec3::y(), s).unwrap();
            let samples = 20_000;
            let mut worst: f64 = 0.0;
            for k in 0..samples {
                let a = 2.0 * PI * k as f64 / samples as f64;
                let u = Vec3::new(a.cos(), a.sin(), 0.0);
                let best = d
                    .iter()
                    .map(|dl| u.dot(dl).clamp(-1.0, 1.0).acos())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
            }
            assert!((worst - PI / s as f64).abs() < 1e-3, "s={s}: {worst}");
        }
    }

    fn pair_contact(nu: Vec3, s: usize) -> Contact {
        make_contact(Pairing::Bodies { i: 0, j: 1 }, nu, 0.0, s).unwrap()
    }

    #[test]
    fn l2g_examples() {
        let c = pair_contact(Vec3::x(), 8);
        assert_eq!(
            l2g(&c, &Vec3::new(1.0, 0.0, 0.0), 2),
            vec![-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]
        );
        assert!(l2g(&c, &Vec3::zeros(), 2).iter().all(|v| *v == 0.0));
        let w = make_contact(Pairing::Wall { body: 1 }, Vec3::z(), 0.0, 8).unwrap();
        assert_eq!(
            l2g(&w, &Vec3::new(0.0, 0.0, 2.0), 2),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0]
        );
    }

    #[test]
    fn direction_matrices_for_one_contact() {
        let c = pair_contact(Vec3::x(), 8);
        let set = assemble_direction_matrices(vec![c], 2, 8).unwrap();
        assert_eq!(set.d_normal.nrows(), 6);
        assert_eq!(set.d_normal.ncols(), 1);
        let col: Vec<f64> = (0..6).map(|r| set.d_normal.get(r, 0)).collect();
        assert_eq!(col, vec![-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(set.d_tangent.ncols(), 8);
        // Balanced fan: the columns of one contact sum to zero.
        let sum = set.d_tangent.matvec(&[1.0; 8]);
        assert!(sum.iter().all(|v| v.abs() < 1e-15));
        // Two equal and opposite blocks per column.
        let dense = set.d_tangent.to_dense();
        for k in 0..8 {
            for r in 0..3 {
                assert_eq!(dense[(r, k)], -dense[(r + 3, k)]);
            }
            let nnz = (0..6).filter(|&r| dense[(r, k)] != 0.0).count();
            assert!(nnz <= 6);
        }
    }

    #[test]
    fn empty_contact_set() {
        let set = assemble_direction_matrices(Vec::new(), 3, 8).unwrap();
        assert!(set.is_empty());
        assert_eq!((set.d_normal.nrows(), set.d_normal.ncols()), (9, 0));
        assert_eq!((set.d_tangent.nrows(), set.d_tangent.ncols()), (9, 0));
    }

    #[test]
    fn relative_velocity_examples() {
        let c = pair_contact(Vec3::x(), 8);
        assert_eq!(relative_normal_velocity(&c, &[0.0; 6]), 0.0);
        assert_eq!(
            relative_normal_velocity(&c, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]),
            -2.0
        );
        assert_eq!(
            relative_normal_velocity(&c, &[-1.5, 0.0, 0.0, 1.5, 0.0, 0.0]),
            3.0
        );
    }

    proptest! {
        #[test]
        fn l2g_transpose_identity(
            dir in prop::array::uniform3(-1.0f64..1.0),
            v in prop::collection::vec(-5.0f64..5.0, 9),
        ) {
            let d = Vec3::from(dir);
            prop_assume!(d.norm() > 1e-3);
            let nu = d.normalize();
            let c = Contact {
                pairing: Pairing::Bodies { i: 0, j: 2 },
                ..pair_contact(nu, 4)
            };
            let lifted = l2g(&c, &nu, 3);
            let lhs: f64 = lifted.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rel = Vec3::new(v[6] - v[0], v[7] - v[1], v[8] - v[2]);
            prop_assert!((lhs - nu.dot(&rel)).abs() < 1e-12);
            prop_assert!((relative_normal_velocity(&c, &v) - lhs).abs() < 1e-12);
        }

        #[test]
        fn l2g_is_linear(
            y1 in prop::array::uniform3(-5.0f64..5.0),
            y2 in prop::array::uniform3(-5.0f64..5.0),
            a in -3.0f64..3.0,
        ) {
            let c = pair_contact(Vec3::z(), 4);
            let (y1, y2) = (Vec3::from(y1), Vec3::from(y2));
            let combo = l2g(&c, &(y1 * a + y2), 2);
            let sep: Vec<f64> = l2g(&c, &y1, 2)
                .iter()
                .zip(l2g(&c, &y2, 2))
                .map(|(p, q)| a * p + q)
                .collect();
            for (p, q) in combo.iter().zip(&sep) {
                prop_assert!((p - q).abs() <= 1e-14 * (1.0 + q.abs()));
            }
        }
    }
}
