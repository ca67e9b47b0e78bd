#[path = "common/mod.rs"]
mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rmstab::fmo::{cfmo, partition};
use rmstab::kalman::{compose, riccati_step};
use rmstab::linalg::{
    intersect, jordan_block, matrix_power_norm, nullspace, spectral_radius, subspace_equal, CMatrix, Subspace,
    Tolerances, C64,
};
use rmstab::model::{
    stationary_phase_distribution, validate, ChannelModel, ChannelTrace, FiniteMarkov, GilbertElliott,
};
use rmstab::observability::{build_lattice, build_obs, build_obs_system, has_fcr_strength, LATTICE_CAP};
use rmstab::phi::{build_sigma, SIGMA_CAP};
use rmstab::schedule::{aggregate, LossModel, Schedule, SchedulePlan, Sensor, SensorSuite};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn cmat(rows: usize, cols: usize, v: &[(f64, f64)]) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |i, j| {
        let (re, im) = v[i * cols + j];
        C64::new(re, im)
    })
}

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<C64>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), rows * cols).prop_map(move |v| cmat(rows, cols, &v))
}

/// Low-rank complex matrix so nullspaces are nontrivial.
fn low_rank(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<C64>> {
    (1..=rows.min(cols), complex_matrix(rows, rows), complex_matrix(rows, cols)).prop_map(move |(r, u, v)| {
        let mut u = u;
        for j in r..rows {
            u.column_mut(j).fill(C64::new(0.0, 0.0));
        }
        u * v
    })
}

fn small_int_matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1i32..=1, rows * cols).prop_map(move |v| {
        CMatrix::new(DMatrix::from_fn(rows, cols, |i, j| C64::new(v[i * cols + j] as f64, 0.0))).unwrap()
    })
}

/// Jordan-form matrix of size `n` with eigenvalue moduli in `[0.5, 2]`.
fn jordan_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    (prop::collection::vec((0.5f64..2.0, 0.0f64..std::f64::consts::TAU), n), prop::collection::vec(any::<bool>(), n))
        .prop_map(move |(eigs, chain)| {
            let mut m = DMatrix::<C64>::zeros(n, n);
            let mut i = 0;
            while i < n {
                let (r, th) = eigs[i];
                let alpha = C64::from_polar(r, th);
                let size = if chain[i] && i + 1 < n { 2 } else { 1 };
                let jb = jordan_block(alpha, size);
                m.view_mut((i, i), (size, size)).copy_from(jb.inner());
                i += size;
            }
            CMatrix::new(m).unwrap()
        })
}

// Linear algebra.

proptest! {
    #[test]
    fn nullspace_annihilated(m in low_rank(3, 5)) {
        let t = tol();
        let k = nullspace(&m, &t);
        let scale = m.norm().max(1e-300);
        for col in k.basis().column_iter() {
            prop_assert!((&m * col).norm() <= 10.0 * t.tol_rank * scale);
        }
        prop_assert!(k.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn intersection_algebra(a in low_rank(3, 4), b in low_rank(2, 4), c in low_rank(2, 4)) {
        let t = tol();
        let (ka, kb, kc) = (nullspace(&a, &t), nullspace(&b, &t), nullspace(&c, &t));
        let ab = intersect(&ka, &kb, &t).unwrap();
        let ba = intersect(&kb, &ka, &t).unwrap();
        prop_assert!(subspace_equal(&ab, &ba, &t).unwrap());
        let left = intersect(&ab, &kc, &t).unwrap();
        let right = intersect(&ka, &intersect(&kb, &kc, &t).unwrap(), &t).unwrap();
        prop_assert!(subspace_equal(&left, &right, &t).unwrap());
        prop_assert!(subspace_equal(&intersect(&ka, &Subspace::full(4), &t).unwrap(), &ka, &t).unwrap());
        prop_assert!(intersect(&ka, &Subspace::trivial(4), &t).unwrap().is_trivial());
        // The stacked matrix has the intersection as its kernel.
        let stacked = DMatrix::from_fn(5, 4, |i, j| if i < 3 { a[(i, j)] } else { b[(i - 3, j)] });
        prop_assert!(subspace_equal(&ab, &nullspace(&stacked, &t), &t).unwrap());
    }

    #[test]
    fn spectral_radius_of_powers(m in complex_matrix(4, 4), k in 1u32..=5) {
        let cm = CMatrix::new(m.clone()).unwrap();
        let rho = spectral_radius(&cm).unwrap();
        let mut pw = m.clone();
        for _ in 1..k {
            pw = &pw * &m;
        }
        let rho_k = spectral_radius(&CMatrix::new(pw).unwrap()).unwrap();
        prop_assert!((rho_k - rho.powi(k as i32)).abs() <= 1e-8 * rho.powi(k as i32).max(1e-300));
    }

    fn power_norm_envelopes(r in 0.5f64..=2.0, th in 0.0f64..std::f64::consts::TAU, j in 1usize..=4, t in 1usize..=100) {
        let b = matrix_power_norm(C64::from_polar(r, th), j, t).unwrap();
        let slack = 1e-9;
        prop_assert!(b.lower <= b.inverse_norm_recip * (1.0 + slack), "{b:?}");
        prop_assert!(b.norm <= b.upper * (1.0 + slack), "{b:?}");
        prop_assert!(b.c1 > 0.0 && b.c2 > 0.0 && b.c2.is_finite());
    }
}

fn power_norm_envelope_grid() {
    for k in 0..=12 {
        let r = 0.5 + 1.5 * k as f64 / 12.0;
        for th in [0.0, 1.0, 2.5] {
            for j in 1..=4 {
                for t in 1..=100 {
                    let b = matrix_power_norm(C64::from_polar(r, th), j, t).unwrap();
                    assert!(b.lower <= b.inverse_norm_recip * (1.0 + 1e-9), "{r} {j} {t}: {b:?}");
                    assert!(b.norm <= b.upper * (1.0 + 1e-9), "{r} {j} {t}: {b:?}");
                }
            }
        }
    }
}

// Channel model.

fn random_chain(max_states: usize, max_period: usize, symbols: usize) -> impl Strategy<Value = FiniteMarkov> {
    (1..=max_states, 1..=max_period).prop_flat_map(move |(n, tau)| {
        (
            prop::collection::vec(prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n), tau),
            prop::collection::vec(0..symbols, n),
            prop::collection::vec(0.01f64..1.0, n),
        )
            .prop_map(move |(ws, emission, mu)| {
                let kernels = ws
                    .into_iter()
                    .map(|mut w| {
                        for row in w.iter_mut() {
                            row[0] += 1e-3;
                        }
                        stochastic(&w)
                    })
                    .collect();
                let s: f64 = mu.iter().sum();
                FiniteMarkov::new(kernels, emission, DVector::from_iterator(n, mu.iter().map(|x| x / s))).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn stationary_phase_law_is_invariant(f in random_chain(4, 3, 2)) {
        let tau = f.period();
        let channel = ChannelModel::FiniteMarkov(f.clone());
        for t in 0..tau {
            let mu = stationary_phase_distribution(&channel, t).unwrap();
            let mut v = mu.clone();
            for s in 1..=tau {
                v = f.kernel((t + s) as i64).transpose() * v;
            }
            let tv = 0.5 * (&v - &mu).abs().sum();
            prop_assert!(tv < 1e-10, "phase {t}: tv {tv}");
        }
    }
}

#[test]
fn sampled_sequences_match_probabilities() {
    let channel = ChannelModel::GilbertElliott(GilbertElliott {
        p_good_to_bad: 0.2,
        p_bad_to_good: 0.4,
        emission_good: vec![0.1, 0.9],
        emission_bad: vec![0.7, 0.3],
    });
    let trials = 100_000u64;
    let mut counts = [0u64; 8];
    for seed in 0..trials {
        let tr = rmstab::model::sample_trace(&channel, 0, 3, seed).unwrap();
        counts[tr.gamma[0] * 4 + tr.gamma[1] * 2 + tr.gamma[2]] += 1;
    }
    let mut chi2 = 0.0;
    for (code, &obs) in counts.iter().enumerate() {
        let gamma = [code >> 2 & 1, code >> 1 & 1, code & 1];
        let p = rmstab::model::sequence_probability(&channel, 0, &gamma).unwrap();
        let expected = p * trials as f64;
        chi2 += (obs as f64 - expected).powi(2) / expected;
    }
    // 7 degrees of freedom; upper 0.001 quantile.
    assert!(chi2 < 24.322, "chi2 = {chi2}");
}

#[test]
fn validate_is_pure() {
    let sys = system(real(&[&[1.5, 1.0], &[0.0, 1.5]]), vec![real(&[&[0.0, 0.0]]), real(&[&[1.0, 0.0]])]);
    let channel = ChannelModel::FiniteMarkov(chain(vec![stochastic(&[vec![1.0, 3.0], vec![2.0, 2.0]])], vec![0, 1]));
    let before = (format!("{sys:?}"), format!("{channel:?}"));
    let a = serde_json::to_string(&validate(&sys, &channel).unwrap()).unwrap();
    let b = serde_json::to_string(&validate(&sys, &channel).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(before, (format!("{sys:?}"), format!("{channel:?}")));
}

// Partition.

proptest! {
    #[test]
    fn partition_is_sound(groups in prop::collection::vec((0.5f64..2.0, 0.0f64..std::f64::consts::TAU, 1usize..=3, 1u32..=4), 1..=3)) {
        // Each group: modulus, phase, count, order; members are α·ω^k.
        let mut values = Vec::new();
        for (r, th, count, order) in &groups {
            let base = C64::from_polar(*r, *th);
            for k in 0..*count {
                values.push(base * C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / *order as f64));
            }
        }
        let n = values.len();
        let t = tol();
        let sys = system(diag(&values), vec![CMatrix::from_real(&DMatrix::from_element(1, n, 1.0)).unwrap()]);
        let part = match partition(&sys, &t) {
            Ok(p) => p,
            // Equal-order values that are not contiguous must be rejected, not regrouped.
            Err(_) => return Ok(()),
        };
        let mut by_column: Vec<_> = part.blocks.iter().collect();
        by_column.sort_by_key(|b| b.col_range.start);
        let mut covered = 0;
        for b in by_column {
            prop_assert_eq!(b.col_range.start, covered);
            covered = b.col_range.end;
            let members = &values[b.col_range.clone()];
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    prop_assert!(cfmo(&[members[i], members[j]], &t).unwrap().is_some());
                }
            }
            // The diagonal block equals the corresponding slice of A.
            let slice = sys.a.inner().view((b.col_range.start, b.col_range.start), (b.dim(), b.dim())).into_owned();
            prop_assert_eq!(&slice, b.a.inner());
        }
        prop_assert_eq!(covered, n);
        for (x, bx) in part.blocks.iter().enumerate() {
            for by in &part.blocks[x + 1..] {
                prop_assert!(cfmo(&[values[bx.col_range.start], values[by.col_range.start]], &t).unwrap().is_none());
            }
        }
        for w in part.blocks.windows(2) {
            let (a0, a1) = (w[0].alpha.norm(), w[1].alpha.norm());
            prop_assert!(a0 > a1 - 1e-12);
            if (a0 - a1).abs() <= 1e-12 {
                prop_assert!(w[0].jbar >= w[1].jbar);
            }
        }
    }
}

// Observability.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    fn kernel_composition(
        a in jordan_matrix(3),
        cs in prop::collection::vec(small_int_matrix(1, 3), 3),
        g1 in prop::collection::vec(0usize..3, 1..=4),
        g2 in prop::collection::vec(0usize..3, 1..=4),
    ) {
        let t = tol();
        let sys = system(a.clone(), cs);
        let whole: Vec<usize> = g1.iter().chain(&g2).copied().collect();
        let k_whole = nullspace(&build_obs_system(&sys, &whole).unwrap().matrix, &t);
        let k1 = nullspace(&build_obs_system(&sys, &g1).unwrap().matrix, &t);
        let k2 = nullspace(&build_obs_system(&sys, &g2).unwrap().matrix, &t);
        let mut a_pow = DMatrix::<C64>::identity(3, 3);
        for _ in 0..g1.len() {
            a_pow = a.inner() * a_pow;
        }
        let a_inv_pow = a_pow.try_inverse().unwrap();
        let pulled = k2.image(&a_inv_pow, &t);
        let expected = intersect(&k1, &pulled, &t).unwrap();
        prop_assert!(subspace_equal(&k_whole, &expected, &t).unwrap(),
            "dims {} vs {}", k_whole.dim(), expected.dim());
    }
}

/// Diagonal block `r·diag(ω^{k_i})` with `ω = e^{2πi/order}`: all kernels are
/// invariant under `A^N`, so the lattice exists.
fn root_block(n: usize) -> impl Strategy<Value = (Vec<C64>, Vec<CMatrix>)> {
    (
        0.5f64..2.0,
        1u32..=4,
        prop::collection::vec(0u32..4, n),
        prop::collection::vec(small_int_matrix(1, n), 2..=3),
    )
        .prop_map(move |(r, order, ks, cs)| {
            let values = ks
                .iter()
                .map(|&k| C64::from_polar(r, std::f64::consts::TAU * (k % order) as f64 / order as f64))
                .collect();
            (values, cs)
        })
}

proptest! {
    fn lattice_closed_for_long_sequences((values, cs) in root_block(3), seq in prop::collection::vec(0usize..3, 12)) {
        let t = tol();
        let d = cs.len();
        let sys = system(diag(&values), cs);
        let part = partition(&sys, &t).unwrap();
        prop_assume!(part.blocks.len() == 1);
        let block = &part.blocks[0];
        let lattice = build_lattice(block, &t, LATTICE_CAP).unwrap();
        let n_ord = block.order as usize;
        for reps in [2, 3] {
            let gamma: Vec<usize> = seq.iter().take(reps * n_ord).map(|g| g % d).collect();
            let k = nullspace(&build_obs(block, &gamma).unwrap().matrix, &t);
            let found = lattice.find(&k, &t);
            prop_assert!(found.is_some(), "kernel of dimension {} missing", k.dim());
            prop_assert_eq!(found.unwrap(), lattice.psi(&gamma).unwrap());
        }
        // Strict containment only points toward larger indices.
        for i in 0..lattice.len() {
            for j in i + 1..lattice.len() {
                let (ki, kj) = (&lattice.elements[i], &lattice.elements[j]);
                let strictly = kj.contains(ki, &t) && kj.dim() > ki.dim();
                prop_assert!(!strictly);
            }
        }
        prop_assert!(lattice.elements[lattice.bottom()].is_trivial());
    }

    fn fcr_strength_is_monotone(a in jordan_matrix(2), cs in prop::collection::vec(small_int_matrix(1, 2), 2), gamma in prop::collection::vec(0usize..2, 2..=6)) {
        let t = tol();
        let sys = system(a, cs);
        let o = build_obs_system(&sys, &gamma).unwrap();
        for q in 0..gamma.len() {
            let stronger = has_fcr_strength(&o, q + 1, &t);
            if stronger.holds && stronger.exact {
                prop_assert!(has_fcr_strength(&o, q, &t).holds, "FCR({}) without FCR({q})", q + 1);
            }
        }
    }
}

// Transition operator against an explicit path sum.

fn path_oracle(
    block: &rmstab::fmo::FmoBlock,
    lattice: &rmstab::observability::KernelLattice,
    f: &FiniteMarkov,
    t0: usize,
    m: usize,
) -> Vec<Vec<DMatrix<f64>>> {
    let t = tol();
    let states = f.num_states();
    let size = lattice.len();
    let mut out = vec![vec![DMatrix::zeros(states, states); size]; size];
    let total = states.pow(m as u32 + 1);
    for code in 0..total {
        let path: Vec<usize> = (0..=m).map(|s| code / states.pow(s as u32) % states).collect();
        let mut p = 1.0;
        for s in 0..m {
            p *= f.kernel((t0 + s + 1) as i64)[(path[s], path[s + 1])];
        }
        if p == 0.0 {
            continue;
        }
        let gamma: Vec<usize> = path[..m].iter().map(|&e| f.emission[e]).collect();
        let k = nullspace(&build_obs(block, &gamma).unwrap().matrix, &t);
        let idx = lattice.find(&k, &t).expect("kernel in lattice");
        for j in 0..size {
            out[lattice.meet(idx, j)][j][(path[m], path[0])] += p;
        }
    }
    out
}

proptest! {
    fn sigma_matches_path_sum((values, cs) in root_block(2), f in random_chain(3, 2, 3)) {
        let t = tol();
        let d = cs.len();
        prop_assume!(f.emission.iter().all(|&e| e < d));
        let sys = system(diag(&values), cs);
        let part = partition(&sys, &t).unwrap();
        prop_assume!(part.blocks.len() == 1);
        let block = &part.blocks[0];
        let lattice = build_lattice(block, &t, LATTICE_CAP).unwrap();
        for phase in 0..f.period() {
            let sigma = build_sigma(block, &lattice, &f, phase, SIGMA_CAP).unwrap();
            prop_assume!(sigma.m <= 4);
            prop_assert!(sigma.conservation_defect(&f) < 1e-12);
            let oracle = path_oracle(block, &lattice, &f, phase, sigma.m);
            for i in 0..lattice.len() {
                for j in 0..lattice.len() {
                    let diff = (sigma.get(i, j) - &oracle[i][j]).amax();
                    prop_assert!(diff < 1e-12, "({i},{j}) differs by {diff}");
                }
            }
        }
    }
}

// Riccati map.

fn psd(n: usize) -> impl Strategy<Value = DMatrix<C64>> {
    complex_matrix(n, n).prop_map(|l| &l * l.adjoint())
}

proptest! {
    fn riccati_preserves_psd(a in complex_matrix(3, 3), l in psd(3), q in psd(3), c in small_int_matrix(2, 3), rf in complex_matrix(2, 2)) {
        let t = tol();
        let r = &rf * rf.adjoint() + DMatrix::identity(2, 2) * C64::new(0.1, 0.0);
        let reference = riccati_reference(&l, c.inner(), &r, &a, &q);
        let scale = l.norm().max(1.0) * a.norm().powi(2).max(1.0) + q.norm();
        prop_assert!(min_eig(&reference) >= -1e-8 * scale);
        let out = riccati_step(
            &CMatrix::new(l).unwrap(), &c, &CMatrix::new(r).unwrap(), &CMatrix::new(a).unwrap(), &CMatrix::new(q).unwrap(), &t,
        ).unwrap();
        prop_assert!(out.is_psd(1e-12 * scale));
        prop_assert!((out.inner() - &reference).norm() <= 1e-8 * scale);
    }

    fn riccati_monotone_in_scale(a in jordan_matrix(2), cs in prop::collection::vec(small_int_matrix(1, 2), 2), gamma in prop::collection::vec(0usize..2, 1..=8), x in 0.0f64..5.0, dx in 0.0f64..5.0) {
        let t = tol();
        let sys = system(a, cs);
        let trace = ChannelTrace::from_symbols(0, gamma);
        let lo = compose(&CMatrix::diag(&[C64::new(x, 0.0); 2]), &trace, &sys, &t).unwrap();
        let hi = compose(&CMatrix::diag(&[C64::new(x + dx, 0.0); 2]), &trace, &sys, &t).unwrap();
        let (pl, ph) = (lo.p_seq.last().unwrap(), hi.p_seq.last().unwrap());
        let diff = ph.inner() - pl.inner();
        prop_assert!(min_eig(&diff) >= -1e-8 * ph.norm2().max(1.0));
    }

    #[test]
    fn lost_measurements_give_lyapunov(a in jordan_matrix(2), steps in 1usize..=10) {
        let t = tol();
        let sys = system(a.clone(), vec![CMatrix::zeros(1, 2)]);
        let traj = compose(&sys.p0, &ChannelTrace::from_symbols(0, vec![0; steps]), &sys, &t).unwrap();
        let mut p = sys.p0.inner().clone();
        for s in 0..steps {
            p = a.inner() * &p * a.inner().adjoint() + sys.q.inner();
            let got = traj.p_seq[s + 1].inner();
            prop_assert!((got - &p).norm() <= 1e-12 * p.norm());
        }
    }
}

// Aggregation.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_preserves_riccati(
        eig in prop::collection::vec(0.3f64..1.8, 2),
        mix in complex_matrix(2, 2),
        h in prop::collection::vec(small_int_matrix(1, 2), 2),
        sched in prop::collection::vec(0usize..2, 1..=3),
        losses in prop::collection::vec(any::<bool>(), 10),
    ) {
        prop_assume!((eig[0] - eig[1]).abs() > 0.05);
        let t = tol();
        // Real F = S diag(eig) S⁻¹ with a well-conditioned S.
        let s = DMatrix::<f64>::identity(2, 2) + mix.map(|z| 0.3 * z.re);
        let Some(s_inv) = s.clone().try_inverse() else { return Ok(()) };
        let f = &s * DMatrix::from_diagonal(&DVector::from_vec(eig.clone())) * &s_inv;
        let suite = SensorSuite {
            f: cm(f.clone()),
            n_cov: CMatrix::identity(2),
            p0: CMatrix::identity(2),
            sensors: h.iter().map(|h| Sensor { h: h.clone(), e: CMatrix::identity(1) }).collect(),
            slots: 1,
        };
        let loss_chain = ChannelModel::Iid(rmstab::model::IidChannel { probs: vec![vec![0.3, 0.7]] });
        let plan = SchedulePlan {
            schedule: Schedule::TimeBased(sched.iter().map(|&x| vec![x]).collect()),
            loss: LossModel::shared(1, loss_chain),
        };
        let agg = aggregate(&suite, &plan, &t).unwrap();
        prop_assert_eq!(agg.channel.period(), sched.len());
        let w = agg.v_inv.inner().clone();

        // Drive both systems with the same selections and losses.
        let mut gamma = Vec::new();
        let mut p_orig = suite.p0.inner().clone();
        let mut expected = vec![p_orig.clone()];
        for (k, &rx) in losses.iter().enumerate() {
            let sensor = sched[k % sched.len()];
            let h_t = if rx { suite.sensors[sensor].h.inner().clone() } else { DMatrix::zeros(1, 2) };
            let c_agg = &h_t * &w;
            let d = agg.system.alphabet.pairs().iter().position(|p| (p.c.inner() - &c_agg).norm() <= 1e-12 * (1.0 + c_agg.norm()));
            prop_assert!(d.is_some(), "no alphabet entry for C = {c_agg}");
            gamma.push(d.unwrap());
            let r = if rx { DMatrix::identity(1, 1) } else { DMatrix::zeros(1, 1) };
            p_orig = riccati_reference(&p_orig, &h_t, &r, &suite.f.inner().clone(), suite.n_cov.inner());
            expected.push(p_orig.clone());
        }
        let traj = compose(&agg.system.p0, &ChannelTrace::from_symbols(0, gamma), &agg.system, &t).unwrap();
        for (p_agg, p_ref) in traj.p_seq.iter().zip(&expected) {
            let back = &w * p_agg.inner() * w.adjoint();
            prop_assert!((&back - p_ref).norm() <= 1e-8 * p_ref.norm().max(1.0));
        }
    }
}

/// The suites checked by the acceptance runner.
#[allow(dead_code)]

// Suites shared with the acceptance runner, which has no test harness.
#[test]
fn kernel_composition_suite() {
    kernel_composition();
}

#[test]
fn lattice_closed_for_long_sequences_suite() {
    lattice_closed_for_long_sequences();
}

#[test]
fn fcr_strength_is_monotone_suite() {
    fcr_strength_is_monotone();
}

#[test]
fn riccati_preserves_psd_suite() {
    riccati_preserves_psd();
}

#[test]
fn riccati_monotone_in_scale_suite() {
    riccati_monotone_in_scale();
}

#[test]
fn power_norm_envelopes_suite() {
    power_norm_envelopes();
}

#[test]
fn power_norm_envelope_grid_suite() {
    power_norm_envelope_grid();
}

#[test]
fn sigma_matches_path_sum_suite() {
    sigma_matches_path_sum();
}

pub fn acceptance_suites() -> Vec<(&'static str, fn())> {
    vec![
        ("kernel composition law", kernel_composition),
        ("lattice closure for 2N/3N sequences", lattice_closed_for_long_sequences),
        ("FCR(q) monotonicity", fcr_strength_is_monotone),
        ("Riccati PSD preservation", riccati_preserves_psd),
        ("Riccati monotonicity in P", riccati_monotone_in_scale),
        ("power-norm envelopes (random)", power_norm_envelopes),
        ("power-norm envelopes (grid)", power_norm_envelope_grid),
        ("transition operator vs path sum", sigma_matches_path_sum),
    ]
}
