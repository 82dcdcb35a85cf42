//! End-to-end acceptance suite.
//!
//! Each test is one release criterion and prints a single `PASS:` line with
//! the measured quantities (run with `--nocapture` to see them); a failed
//! criterion fails its test with the same numbers in the panic message.
//! The heavyweight benchmarks (02, 03) take minutes — they are part of the
//! default suite on purpose, so `cargo test --workspace` is the release bar.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use spconf::conformal::{
    beta_star_search, compute_scores, fit_conformal, gscp_interval, lcp_interval,
    weighted_quantile, Method, MethodConfig, ScoreSet,
};
use spconf::data::{split_dataset, Observation, RngSpec, Site};
use spconf::eval::{candidate_grid, coverage_gap_trend, cv_select, evaluate};
use spconf::models::{
    default_bandwidths, fit_kernel_regression, select_bandwidth, ModelError, Predictor,
};
use spconf::qrf::{fit_qrf, qrf_quantile, ForestParams, WeightVector};
use spconf::spatial::build_index;
use spconf::synth::{
    bessel_k, gen_scenario, matern_cov, sample_gp, GpSampler, MaternParams, ScenarioSpec,
};

struct Zero;
impl Predictor for Zero {
    fn predict(&self, _: &[f64]) -> Result<f64, ModelError> {
        Ok(0.0)
    }
}

#[test]
fn acceptance_01_exchangeability_anchor() {
    // GSCP with i.i.d. N(0,1) residuals, 500 calibration points, alpha 0.1,
    // 2000 Monte-Carlo trials: marginal coverage must sit in
    // [0.90, 0.902] widened by 3 MC standard errors.
    let start = Instant::now();
    let spec = RngSpec::new(402);
    let cfg = MethodConfig::new(Method::Gscp, 0.1);
    let trials = 2000usize;
    let mut covered = 0usize;
    for t in 0..trials {
        let mut rng = spec.indexed_stream("trial", t as u64);
        let residuals: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let y: f64 = rng.sample(StandardNormal);
        let scores = ScoreSet::new(residuals).unwrap();
        let interval = gscp_interval(&[0.0], &Zero, &scores, &cfg).unwrap();
        if interval.covers(y) {
            covered += 1;
        }
    }
    let coverage = covered as f64 / trials as f64;
    let se = (0.9_f64 * 0.1 / trials as f64).sqrt();
    let (lo, hi) = (0.90 - 3.0 * se, 0.902 + 3.0 * se);
    let ok = (lo..=hi).contains(&coverage);
    println!(
        "{}: criterion 01 exchangeability anchor — coverage {coverage:.4} in [{lo:.4}, {hi:.4}] \
         ({} trials, {:.1?})",
        if ok { "PASS" } else { "FAIL" },
        trials,
        start.elapsed()
    );
    assert!(ok, "coverage {coverage:.4} outside [{lo:.4}, {hi:.4}]");
}

#[test]
fn acceptance_02_synthetic_benchmark_lscp_tighter_than_gscp() {
    // Scenarios 1-3, n = 2000, alpha 0.1, 20 seeds, CV over
    // k in {5,10,20,50,100}: per scenario, LSCP mean coverage must land in
    // [0.87, 0.95] and LSCP must be narrower than GSCP on average.
    let start = Instant::now();
    let alpha = 0.1;
    let ks = [5usize, 10, 20, 50, 100];
    let hs = [0.01, 0.03, 0.1, 0.3];
    let seeds: Vec<u64> = (1..=20).collect();
    let mut all_ok = true;
    let mut lines = Vec::new();

    for scenario in 1u8..=3 {
        let mut lscp_cov = 0.0;
        let mut lscp_width = 0.0;
        let mut gscp_width = 0.0;
        for &seed in &seeds {
            let base = RngSpec::new(seed);
            let data = gen_scenario(&ScenarioSpec::new(scenario, 2000, seed)).unwrap();
            let split = split_dataset(data, (0.4, 0.4, 0.2), &base).unwrap();
            let train = split.train_set();
            let calib = split.calib_set();
            let test = split.test_set();
            let bw = select_bandwidth(&train, &default_bandwidths(&train), 5, &base).unwrap();
            let model = fit_kernel_regression(&train, bw).unwrap();
            let truths: Vec<f64> = test.iter().map(|o| o.response).collect();
            let sites: Vec<Site> = test.iter().map(|o| o.site.clone()).collect();

            for method in [Method::Lscp, Method::Gscp] {
                let mut template = MethodConfig::new(method, alpha);
                template.forest.rng = base.derive(&format!("forest/{}", method.name()));
                let grid = candidate_grid(method, &ks, &hs);
                let cv = cv_select(
                    &calib,
                    &model,
                    &template,
                    &grid,
                    5,
                    &base.derive(&format!("cv/{}", method.name())),
                )
                .unwrap();
                let mut chosen = template.clone();
                if let Some(k) = cv.candidate.k {
                    chosen.k = k;
                }
                if let Some(h) = cv.candidate.h {
                    chosen.bandwidth = h;
                }
                let fitted = fit_conformal(&chosen, &model, &calib).unwrap();
                let intervals = fitted.intervals_batch(&test, &model).unwrap();
                let metrics = evaluate(&intervals, &truths, &sites, 5).unwrap();
                match method {
                    Method::Lscp => {
                        lscp_cov += metrics.coverage;
                        lscp_width += metrics.mean_width;
                    }
                    _ => gscp_width += metrics.mean_width,
                }
            }
        }
        let n_seeds = seeds.len() as f64;
        let (cov, lw, gw) = (
            lscp_cov / n_seeds,
            lscp_width / n_seeds,
            gscp_width / n_seeds,
        );
        let ok = (0.87..=0.95).contains(&cov) && lw < gw;
        all_ok &= ok;
        lines.push(format!(
            "scenario {scenario}: LSCP coverage {cov:.4}, width {lw:.3} vs GSCP {gw:.3} — {}",
            if ok { "ok" } else { "VIOLATED" }
        ));
    }
    println!(
        "{}: criterion 02 synthetic benchmark — {} ({:.1?})",
        if all_ok { "PASS" } else { "FAIL" },
        lines.join("; "),
        start.elapsed()
    );
    assert!(all_ok, "{}", lines.join("\n"));
}

#[test]
fn acceptance_03_coverage_gap_shrinks_with_sample_size() {
    // Scenario 1, n in {500, 2000, 8000}, 10 reps: the mean absolute
    // coverage gap must trend downward (negative Spearman rho).
    let start = Instant::now();
    let mut template = MethodConfig::new(Method::Lscp, 0.1);
    template.k = 20;
    let report =
        coverage_gap_trend(1, &template, &[500, 2000, 8000], 10, &RngSpec::new(1203)).unwrap();
    let gaps: Vec<String> = report
        .points
        .iter()
        .map(|p| format!("n={}: {:.4}", p.n, p.mean_abs_gap))
        .collect();
    let ok = report.spearman_rho < 0.0;
    println!(
        "{}: criterion 03 coverage-gap trend — rho {:.3}, {} ({:.1?})",
        if ok { "PASS" } else { "FAIL" },
        report.spearman_rho,
        gaps.join(", "),
        start.elapsed()
    );
    assert!(
        ok,
        "Spearman rho {:.3} is not negative; gaps {}",
        report.spearman_rho,
        gaps.join(", ")
    );
}

/// Reference quantile: sort, cumulate, first value whose cumulative weight
/// reaches p (same 1e-9 slack as the library contract).
fn sort_and_cumulate(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|&(_, w)| w > 0.0)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if p == 0.0 {
        return pairs[0].0;
    }
    let mut cum = 0.0;
    for &(v, w) in &pairs {
        cum += w;
        if cum >= p - 1e-9 {
            return v;
        }
    }
    pairs.last().unwrap().0
}

#[test]
fn acceptance_04_oracle_equivalences() {
    let start = Instant::now();

    // (a) weighted_quantile vs an independent sort-and-cumulate oracle on
    // 1000 random cases (duplicated values included).
    let mut rng = RngSpec::new(404).stream("wq");
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let values: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..40) as f64) / 2.0)
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1..100) as f64).collect();
        let weights = WeightVector::normalized(raw.clone()).unwrap();
        let p: f64 = rng.random::<f64>();
        let got = weighted_quantile(&values, &weights, p).unwrap();
        let want = sort_and_cumulate(&values, weights.as_slice(), p);
        assert_eq!(got, want, "case {case}: n={n}, p={p}");
    }

    // (b) k-NN vs linear scan on 200 random cases (coarse lattice => ties).
    let mut rng = RngSpec::new(404).stream("knn");
    for case in 0..200 {
        let n = rng.random_range(2..=60);
        let lattice = case % 2 == 0;
        let sites: Vec<Site> = (0..n)
            .map(|_| {
                if lattice {
                    Site::xy(rng.random_range(0..5) as f64, rng.random_range(0..5) as f64)
                } else {
                    Site::xy(rng.random(), rng.random())
                }
            })
            .collect();
        let index = build_index(&sites).unwrap();
        let query = Site::xy(rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0);
        let k = rng.random_range(1..=n);
        let exclude = if case % 3 == 0 {
            Some(rng.random_range(0..n))
        } else {
            None
        };
        let got = index.knn(&query, k, exclude);
        let mut brute: Vec<(f64, usize)> = sites
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, s)| (query.distance(s), i))
            .collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = brute.iter().take(k).map(|&(_, i)| i).collect();
        assert_eq!(got.indices, want, "case {case}: k={k}, exclude={exclude:?}");
    }

    // (c) forest quantiles are monotone in p on 200 random queries.
    let mut rng = RngSpec::new(404).stream("qrf");
    let train: Vec<(Vec<f64>, f64)> = (0..300)
        .map(|_| {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let y = x[0] * 2.0 + rng.random::<f64>();
            (x, y)
        })
        .collect();
    let params = ForestParams {
        n_trees: 60,
        rng: RngSpec::new(4040),
        ..Default::default()
    };
    let forest = fit_qrf(&train, &params).unwrap();
    for case in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut last = f64::NEG_INFINITY;
        for i in 0..=20 {
            let q = qrf_quantile(&forest, &x, i as f64 / 20.0).unwrap();
            assert!(
                q >= last,
                "case {case}: quantile decreased at p={}",
                i as f64 / 20.0
            );
            last = q;
        }
    }

    // (d) LCP at h = 1e6 reproduces GSCP to 1e-6 on 10 datasets.
    let mut rng = RngSpec::new(404).stream("lcp");
    let mut max_gap = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(50..300);
        let calib: Vec<Observation> = (0..n)
            .map(|_| {
                Observation::new(
                    Site::xy(rng.random(), rng.random()),
                    vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()],
                    rng.random::<f64>() * 6.0 - 3.0,
                )
                .unwrap()
            })
            .collect();
        let scores = compute_scores(&Zero, &calib).unwrap();
        let feats: Vec<Vec<f64>> = calib.iter().map(|o| o.features.clone()).collect();
        let mut lcp_cfg = MethodConfig::new(Method::Lcp, 0.1);
        lcp_cfg.bandwidth = 1e6;
        let gscp_cfg = MethodConfig::new(Method::Gscp, 0.1);
        for _ in 0..3 {
            let probe = vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()];
            let a = lcp_interval(&probe, &Zero, &scores, &feats, &lcp_cfg).unwrap();
            let b = gscp_interval(&probe, &Zero, &scores, &gscp_cfg).unwrap();
            max_gap = max_gap.max((a.lo - b.lo).abs()).max((a.hi - b.hi).abs());
        }
    }
    assert!(max_gap < 1e-6, "LCP/GSCP endpoint gap {max_gap:e}");

    println!(
        "PASS: criterion 04 oracle equivalences — quantile 1000 cases, knn 200 cases, \
         monotone 200 queries, LCP/GSCP gap {max_gap:.2e} ({:.1?})",
        start.elapsed()
    );
}

#[test]
fn acceptance_05_numerics() {
    let start = Instant::now();

    // (a) Half-integer Bessel closed forms to 1e-9 relative:
    // K_{1/2} = sqrt(pi/2x) e^{-x}; each next order adds a polynomial factor.
    let mut max_rel = 0.0f64;
    for &x in &[0.1, 1.0, 5.0, 20.0] {
        let base = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
        let exact = [
            base,
            base * (1.0 + 1.0 / x),
            base * (1.0 + 3.0 / x + 3.0 / (x * x)),
        ];
        for (i, &nu) in [0.5, 1.5, 2.5].iter().enumerate() {
            let got = bessel_k(nu, x).unwrap();
            let rel = ((got - exact[i]) / exact[i]).abs();
            max_rel = max_rel.max(rel);
            assert!(rel < 1e-9, "K_{nu}({x}): rel err {rel:e}");
        }
    }

    // (b) matern_cov(0) = sigma^2.
    for params in [
        MaternParams::default(),
        MaternParams::new(2.5, 0.3, 1.5).unwrap(),
        MaternParams::new(0.5, 0.05, 0.3).unwrap(),
    ] {
        assert_eq!(matern_cov(0.0, &params), params.variance);
    }

    // (c) GP pairwise sample covariance within 3 sigma of matern_cov(d)
    // over 20000 draws (Var(z_i z_j) = C_ii C_jj + C_ij^2 for Gaussians).
    let sites = vec![
        Site::xy(0.0, 0.0),
        Site::xy(0.05, 0.0),
        Site::xy(0.0, 0.12),
        Site::xy(0.3, 0.25),
    ];
    let params = MaternParams::default();
    let sampler = GpSampler::new(&sites, &params).unwrap();
    let reps = 20_000usize;
    let mut rng = RngSpec::new(405).stream("gp");
    let mut cross = vec![vec![0.0f64; sites.len()]; sites.len()];
    for _ in 0..reps {
        let z = sampler.sample(&mut rng);
        for i in 0..sites.len() {
            for j in i..sites.len() {
                cross[i][j] += z[i] * z[j];
            }
        }
    }
    let mut max_z = 0.0f64;
    for i in 0..sites.len() {
        for j in i..sites.len() {
            let want = matern_cov(sites[i].distance(&sites[j]), &params);
            let got = cross[i][j] / reps as f64;
            let cii = matern_cov(0.0, &params);
            let sd = ((cii * cii + want * want) / reps as f64).sqrt();
            let z = ((got - want) / sd).abs();
            max_z = max_z.max(z);
            assert!(
                z <= 3.0,
                "pair ({i},{j}): cov {got:.4} vs {want:.4}, z = {z:.2}"
            );
        }
    }

    // One library-level draw to tie sample_gp to the same machinery.
    let field = sample_gp(&sites, &params, &RngSpec::new(406)).unwrap();
    assert_eq!(field.len(), sites.len());

    println!(
        "PASS: criterion 05 numerics — bessel rel {max_rel:.1e}, GP max |z| {max_z:.2} over \
         {reps} reps ({:.1?})",
        start.elapsed()
    );
}

#[test]
fn acceptance_06_beta_star_analytic_checks() {
    use statrs::distribution::{ContinuousCDF, Normal};
    let start = Instant::now();
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut results = Vec::new();
    for &alpha in &[0.1, 0.2] {
        // Exactly symmetric bell-shaped sample: mirrored normal quantiles.
        let m = 500;
        let mut symmetric = Vec::with_capacity(2 * m);
        for i in 0..m {
            let q = normal.inverse_cdf(0.5 + (i as f64 + 0.5) / (2.0 * m as f64));
            symmetric.push(q);
            symmetric.push(-q);
        }
        let w = WeightVector::uniform(symmetric.len());
        let star = beta_star_search(
            |beta| {
                (
                    weighted_quantile(&symmetric, &w, beta).unwrap(),
                    weighted_quantile(&symmetric, &w, 1.0 - alpha + beta).unwrap(),
                )
            },
            alpha,
            20,
        );
        let sym_ok = (star.beta - alpha / 2.0).abs() <= alpha / 20.0 + 1e-12;
        results.push((alpha, "symmetric", star.beta, sym_ok));

        // Right-skewed (exponential quantile) sample: the cheapest window
        // starts at the bottom.
        let vals: Vec<f64> = (0..400)
            .map(|i| -(1.0 - (i as f64 + 0.5) / 400.0).ln())
            .collect();
        let w = WeightVector::uniform(vals.len());
        let star = beta_star_search(
            |beta| {
                (
                    weighted_quantile(&vals, &w, beta).unwrap(),
                    weighted_quantile(&vals, &w, 1.0 - alpha + beta).unwrap(),
                )
            },
            alpha,
            20,
        );
        let exp_ok = star.beta.abs() <= alpha / 20.0 + 1e-12;
        results.push((alpha, "exponential", star.beta, exp_ok));
    }
    let all_ok = results.iter().all(|r| r.3);
    let detail: Vec<String> = results
        .iter()
        .map(|(a, kind, b, ok)| {
            format!(
                "alpha {a} {kind}: beta* = {b:.4} {}",
                if *ok { "ok" } else { "VIOLATED" }
            )
        })
        .collect();
    println!(
        "{}: criterion 06 beta* analytic checks — {} ({:.1?})",
        if all_ok { "PASS" } else { "FAIL" },
        detail.join("; "),
        start.elapsed()
    );
    assert!(all_ok, "{}", detail.join("\n"));
}

#[test]
fn acceptance_07_real_pipeline_smoke() {
    // The bundled 500-row CSV runs end-to-end through the binary using the
    // bundled manifest: summary.csv gets one row per method and every
    // coverage lands in [0.8, 1.0] at alpha 0.1.
    let start = Instant::now();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_spconf"))
        .current_dir(&root)
        .args(["real", "--config", "configs/real.conf"])
        .arg("--out")
        .arg(out.path())
        .output()
        .expect("binary runs");
    assert!(
        status.status.success(),
        "exit {:?}\nstderr: {}",
        status.status.code(),
        String::from_utf8_lossy(&status.stderr)
    );

    let summary = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    let mut rows: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for line in summary.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6, "bad row: {line}");
        rows.insert(
            fields[0].to_string(),
            (fields[4].parse().unwrap(), fields[5].parse().unwrap()),
        );
    }
    let expected = ["EnbPI", "GSCP", "LCP", "LSCP", "SLSCP"];
    let names: Vec<&str> = rows.keys().map(String::as_str).collect();
    let one_each = names == expected;
    let cov_ok = rows.values().all(|&(cov, _)| (0.8..=1.0).contains(&cov));
    let detail: Vec<String> = rows
        .iter()
        .map(|(m, (c, w))| format!("{m} {c:.3}/{w:.1}"))
        .collect();
    let ok = one_each && cov_ok;
    println!(
        "{}: criterion 07 real pipeline smoke — coverage/width per method: {} ({:.1?})",
        if ok { "PASS" } else { "FAIL" },
        detail.join(", "),
        start.elapsed()
    );
    assert!(one_each, "expected one row per method, got {names:?}");
    assert!(cov_ok, "coverage outside [0.8, 1.0]: {detail:?}");
}
