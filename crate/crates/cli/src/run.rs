use swssb_core::collapse::{collapse_score, CollapseOptions, Series};
use swssb_core::config_space::{ChargeConfiguration, Lattice, SectorDistribution, DEFAULT_SECTOR_CAP};
use swssb_core::decoders::{benchmark, decoding_lattice, exact_comparison, DecoderKind};
use swssb_core::diagnostics::{cmi_scan, correlator_series, CmiGeometry, CorrelatorMeta, Insertion, RenyiIndex};
use swssb_core::exact_evolver::{evolve_series, DiagonalGenerator};
use swssb_core::hydro_gaussian::{covariance, single_site_cmi, BhattacharyyaScan, InitialSpectrum, Regularization};
use swssb_core::krylov::KrylovOptions;
use swssb_core::modelf_langevin::{ModelFParams, ModelFState};
use swssb_core::rotor_analytic::{self as rotor, RgOptions};
use swssb_core::ssep_sampler::{derive_seed, disorder_averaged_winding, renyi2_winding};

use crate::output::{FieldSnapshot, Sink, Table};
use crate::row;
use crate::spec::*;
use crate::{CliError, Ctx};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_times(times: &[f64]) -> Result<(), CliError> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(usage("times must be a non-empty list of finite non-negative numbers"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("times must be strictly increasing"));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(usage(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Runs the experiment in `sink.spec` and writes its outputs.
pub fn run(sink: &mut Sink) -> Result<(), CliError> {
    let spec = sink.spec.clone();
    spec.validate()?;
    if spec.experiment.stochastic() && spec.seed.is_none() {
        return Err(usage(format!("experiment '{}' needs a seed (spec `seed` or --seed)", spec.experiment.name())));
    }
    let seed = spec.seed.unwrap_or(0);
    match spec.experiment {
        Kind::Evolve => evolve(sink, spec.evolve.as_ref().unwrap()),
        Kind::Correlators => correlators(sink, spec.correlators.as_ref().unwrap()),
        Kind::Cmi => cmi(sink, spec.cmi.as_ref().unwrap()),
        Kind::Decode => decode(sink, spec.decode.as_ref().unwrap(), seed),
        Kind::Winding => winding(sink, spec.winding.as_ref().unwrap(), seed),
        Kind::Hydro => hydro(sink, spec.hydro.as_ref().unwrap()),
        Kind::Rotor => rotor_run(sink, spec.rotor.as_ref().unwrap()),
        Kind::Rg => rg(sink, spec.rg.as_ref().unwrap()),
        Kind::Modelf => modelf(sink, spec.modelf.as_ref().unwrap(), seed),
    }
}

fn evolved(
    lattice: &LatticeSpec,
    initial: &InitialSpec,
    gamma: f64,
    times: &[f64],
) -> Result<(Lattice, Vec<SectorDistribution>), CliError> {
    check_positive("gamma", gamma)?;
    check_times(times)?;
    let lat = lattice.build()?;
    let occ = initial.occupations(&lat)?;
    let start = SectorDistribution::point_mass(&lat, ChargeConfiguration::from_occupations(&occ), DEFAULT_SECTOR_CAP)
        .ctx(|| "initial state".into())?;
    let gen = DiagonalGenerator::for_distribution(&start, gamma, DEFAULT_SECTOR_CAP).ctx(|| "generator".into())?;
    let out = evolve_series(&start, &gen, times, KrylovOptions::default()).ctx(|| "evolution".into())?;
    Ok((lat, out.into_iter().map(|(d, _)| d).collect()))
}

fn collapse_table(name: &str, families: &[(String, Vec<Series>)], specs: &[CollapseSpec]) -> Result<Table, CliError> {
    let mut tab = Table::new(name, &["series", "x_exp", "y_exp", "score", "ci_lo", "ci_hi", "support_lo", "support_hi"]);
    for (label, series) in families {
        for c in specs {
            let opts = CollapseOptions { seed: 0, ..CollapseOptions::default() };
            let s = collapse_score(series, c.x_exp, c.y_exp, opts).ctx(|| format!("collapse of {label}"))?;
            tab.push(row![label.as_str(), c.x_exp, c.y_exp, s.score, s.ci_lo, s.ci_hi, s.support.0, s.support.1]);
        }
    }
    Ok(tab)
}

fn evolve(sink: &mut Sink, s: &EvolveSpec) -> Result<(), CliError> {
    let (lat, dists) = evolved(&s.lattice, &s.initial, s.gamma, &s.times)?;
    let mut dens = Table::new("density", &["t", "site", "value"]);
    for (&t, d) in s.times.iter().zip(&dists) {
        for (i, v) in d.density().into_iter().enumerate() {
            dens.push(row![t, i, v]);
        }
    }
    sink.csv(&dens)?;
    if !s.separations.is_empty() {
        let mut tab = Table::new("correlators", &["t", "q", "x", "value"]);
        for (&t, d) in s.times.iter().zip(&dists) {
            for q in [RenyiIndex::One, RenyiIndex::Two] {
                let meta = CorrelatorMeta { t, gamma: s.gamma, l: lat.n_sites(), q: q.as_u8(), orientation: Insertion::Single };
                let c = correlator_series(d, q, Insertion::Single, &s.separations, meta).ctx(|| format!("correlators at t = {t}"))?;
                for (x, v) in c.x.iter().zip(&c.values) {
                    tab.push(row![t, q.as_u8() as usize, *x, *v]);
                }
            }
        }
        sink.csv(&tab)?;
    }
    if s.snapshots {
        for (k, d) in dists.iter().enumerate() {
            #[derive(serde::Serialize)]
            struct Snap {
                t: f64,
                distribution: swssb_core::config_space::DistributionSnapshot,
            }
            sink.json(&format!("snapshot_{k:03}"), &Snap { t: s.times[k], distribution: d.snapshot() })?;
        }
    }
    Ok(())
}

fn correlators(sink: &mut Sink, s: &CorrelatorSpec) -> Result<(), CliError> {
    let qs: Vec<RenyiIndex> = s
        .q
        .iter()
        .map(|q| match q {
            1 => Ok(RenyiIndex::One),
            2 => Ok(RenyiIndex::Two),
            _ => Err(usage(format!("Rényi index must be 1 or 2, got {q}"))),
        })
        .collect::<Result<_, _>>()?;
    if s.separations.is_empty() {
        return Err(usage("separations must not be empty"));
    }
    let (lat, dists) = evolved(&s.lattice, &s.initial, s.gamma, &s.times)?;
    let mut tab = Table::new("correlators", &["t", "q", "x", "value", "x_over_t", "x_over_sqrt_t"]);
    let mut families: Vec<(String, Vec<Series>)> = qs.iter().map(|q| (format!("C{}", q.as_u8()), Vec::new())).collect();
    for (&t, d) in s.times.iter().zip(&dists) {
        for (qi, &q) in qs.iter().enumerate() {
            let meta = CorrelatorMeta { t, gamma: s.gamma, l: lat.n_sites(), q: q.as_u8(), orientation: s.insertion };
            let c = correlator_series(d, q, s.insertion, &s.separations, meta).ctx(|| format!("correlators at t = {t}"))?;
            for (x, v) in c.x.iter().zip(&c.values) {
                tab.push(row![t, q.as_u8() as usize, *x, *v, x / t, x / t.sqrt()]);
            }
            if t > 0.0 {
                families[qi].1.push(Series::new(t, c.x.clone(), c.values.clone()));
            }
        }
    }
    sink.csv(&tab)?;
    if !s.collapse.is_empty() {
        sink.csv(&collapse_table("collapse", &families, &s.collapse)?)?;
    }
    Ok(())
}

fn cmi(sink: &mut Sink, s: &CmiSpec) -> Result<(), CliError> {
    if s.r_b.is_empty() {
        return Err(usage("r_b must not be empty"));
    }
    let (_, dists) = evolved(&s.lattice, &s.initial, s.gamma, &s.times)?;
    let geom = match s.geometry {
        CmiLayout::Covering => CmiGeometry::Covering,
        CmiLayout::Interior => CmiGeometry::Interior,
    };
    let mut tab = Table::new("cmi", &["t", "r_b", "cmi", "r_b_over_t", "r_b_over_sqrt_t"]);
    let mut series = Vec::new();
    for (&t, d) in s.times.iter().zip(&dists) {
        let vals = cmi_scan(d, geom, &s.r_b).ctx(|| format!("CMI at t = {t}"))?;
        for (&r, &v) in s.r_b.iter().zip(&vals) {
            tab.push(row![t, r, v, r as f64 / t, r as f64 / t.sqrt()]);
        }
        if t > 0.0 {
            series.push(Series::new(t, s.r_b.iter().map(|&r| r as f64).collect(), vals));
        }
    }
    sink.csv(&tab)?;
    if !s.collapse.is_empty() {
        sink.csv(&collapse_table("collapse", &[("cmi".into(), series)], &s.collapse)?)?;
    }
    Ok(())
}

fn decode(sink: &mut Sink, s: &DecodeSpec, seed: u64) -> Result<(), CliError> {
    check_positive("gamma", s.gamma)?;
    check_times(&s.times)?;
    if s.r_b.is_empty() || s.r_b.contains(&0) || s.trials == 0 || s.l == 0 {
        return Err(usage("need L >= 1, trials >= 1 and a non-empty list of positive R_B"));
    }
    let mut kinds = Vec::new();
    for d in &s.decoders {
        let k = DecoderKind::parse(d).map_err(|e| usage(e.to_string()))?;
        if kinds.contains(&k) {
            return Err(usage(format!("decoder '{d}' listed twice")));
        }
        kinds.push(k);
    }
    if kinds.is_empty() {
        return Err(usage("decoders must not be empty"));
    }
    let mut reports = Vec::new();
    if kinds.contains(&DecoderKind::Optimal) {
        // Exact posterior: all decoders see the same exactly evolved chain.
        let lat = decoding_lattice(s.l);
        let start = swssb_core::config_space::neel_state(&lat, DEFAULT_SECTOR_CAP).ctx(|| "Néel state".into())?;
        let gen = DiagonalGenerator::for_distribution(&start, s.gamma, DEFAULT_SECTOR_CAP).ctx(|| "generator".into())?;
        let dists = evolve_series(&start, &gen, &s.times, KrylovOptions::default()).ctx(|| "evolution".into())?;
        for (ti, ((d, _), &t)) in dists.iter().zip(&s.times).enumerate() {
            for (ri, &r) in s.r_b.iter().enumerate() {
                let cmp = exact_comparison(d, s.gamma, t, r, s.trials, derive_seed(seed, (ti * 1_000_003 + ri) as u64))
                    .ctx(|| format!("exact decoding at t = {t}, R_B = {r}"))?;
                reports.extend(cmp.sampled.into_iter().filter(|rep| kinds.contains(&rep.decoder)));
            }
        }
        reports.sort_by(|a, b| {
            let pos = |k: DecoderKind| kinds.iter().position(|&x| x == k);
            pos(a.decoder).cmp(&pos(b.decoder)).then(a.t.total_cmp(&b.t)).then(a.r_b.cmp(&b.r_b))
        });
    } else {
        reports = benchmark(&kinds, s.l, s.gamma, &s.times, &s.r_b, s.trials, seed).ctx(|| "decoder benchmark".into())?;
    }
    let mut tab = Table::new(
        "decode",
        &["decoder", "t", "R_B", "trials", "successes", "p", "ci_lo", "ci_hi", "ties", "R_B_over_t", "R_B_over_sqrt_t"],
    );
    for r in &reports {
        let rb = r.r_b as f64;
        tab.push(row![r.decoder.name(), r.t, r.r_b, r.trials, r.successes, r.p, r.ci_lo, r.ci_hi, r.ties, rb / r.t, rb / r.t.sqrt()]);
    }
    sink.csv(&tab)?;
    if !s.collapse.is_empty() {
        let families: Vec<(String, Vec<Series>)> = kinds
            .iter()
            .map(|&k| {
                let series = s
                    .times
                    .iter()
                    .filter(|&&t| t > 0.0)
                    .map(|&t| {
                        let pts: Vec<_> = reports.iter().filter(|r| r.decoder == k && r.t == t).collect();
                        Series::new(t, pts.iter().map(|r| r.r_b as f64).collect(), pts.iter().map(|r| r.p).collect())
                    })
                    .collect();
                (k.name().to_string(), series)
            })
            .collect();
        sink.csv(&collapse_table("collapse", &families, &s.collapse)?)?;
    }
    Ok(())
}

fn winding(sink: &mut Sink, s: &WindingSpec, seed: u64) -> Result<(), CliError> {
    check_positive("gamma", s.gamma)?;
    check_times(&s.times)?;
    check_positive("duration_factor", s.duration_factor)?;
    if !(s.acceptance_floor > 0.0 && s.acceptance_floor <= 1.0) || s.samples == 0 {
        return Err(usage("need samples >= 1 and 0 < acceptance_floor <= 1"));
    }
    let lat = s.lattice.build()?;
    let occ = s.initial.occupations(&lat)?;
    let mut tab =
        Table::new("winding", &["t", "mode", "duration", "samples", "attempts", "acceptance", "rho", "rho_stderr", "all_integer"]);
    for (k, &t) in s.times.iter().enumerate() {
        let sub = derive_seed(seed, k as u64);
        let (mode, duration, st) = match s.mode {
            WindingMode::Renyi2 => {
                let dur = s.duration_factor * t;
                let st = renyi2_winding(&lat, s.gamma, &occ, dur, s.samples, sub, s.acceptance_floor)
                    .ctx(|| format!("Rényi-2 winding at t = {t}"))?;
                ("renyi2", dur, st)
            }
            WindingMode::Disorder => {
                let inner = s.inner.ok_or_else(|| usage("disorder mode needs `inner`"))?;
                if inner < 2 {
                    return Err(usage("inner must be >= 2"));
                }
                let st = disorder_averaged_winding(&lat, s.gamma, &occ, t, s.samples, inner, sub, s.acceptance_floor)
                    .ctx(|| format!("disorder-averaged winding at t = {t}"))?;
                ("disorder", t, st)
            }
        };
        tab.push(row![t, mode, duration, st.samples, st.attempts, st.acceptance, st.rho, st.rho_stderr, st.all_integer]);
    }
    sink.csv(&tab)
}

fn hydro(sink: &mut Sink, s: &HydroSpec) -> Result<(), CliError> {
    check_positive("D", s.d)?;
    check_positive("gamma_n", s.gamma_n)?;
    check_times(&s.times)?;
    if s.times[0] == 0.0 {
        return Err(usage("hydro times must be positive"));
    }
    let mut tab = Table::new("hydro_cmi", &["t", "r_b", "cmi", "r_b_over_sqrt_t", "cmi_times_t"]);
    let mut btab = Table::new("bhattacharyya", &["t", "r", "charge", "distance", "r_over_sqrt_t"]);
    let mut series = Vec::new();
    for &t in &s.times {
        let field = covariance(s.l, 1.0, s.d, s.gamma_n, t, &InitialSpectrum::Zero).ctx(|| format!("covariance at t = {t}"))?;
        let mut vals = Vec::with_capacity(s.r_b.len());
        for &r in &s.r_b {
            let v = single_site_cmi(&field, r, Regularization::ZeroMode).ctx(|| format!("CMI at t = {t}, R_B = {r}"))?;
            tab.push(row![t, r, v, r as f64 / t.sqrt(), v * t]);
            vals.push(v);
        }
        series.push(Series::new(t, s.r_b.iter().map(|&r| r as f64).collect(), vals));
        if !s.r.is_empty() && !s.charges.is_empty() {
            let scan = BhattacharyyaScan::new(&field);
            for &r in &s.r {
                for &q in &s.charges {
                    let d = scan.distance(r, q).ctx(|| format!("Bhattacharyya distance at r = {r}"))?;
                    btab.push(row![t, r, q, d, r as f64 / t.sqrt()]);
                }
            }
        }
    }
    sink.csv(&tab)?;
    if !btab.rows.is_empty() {
        sink.csv(&btab)?;
    }
    if !s.collapse.is_empty() && !s.r_b.is_empty() {
        sink.csv(&collapse_table("collapse", &[("hydro_cmi".into(), series)], &s.collapse)?)?;
    }
    Ok(())
}

fn rotor_run(sink: &mut Sink, s: &RotorSpec) -> Result<(), CliError> {
    check_times(&s.times)?;
    let geom = match s.geometry {
        RotorGeometrySpec::EdgeCovering => rotor::CmiGeometry::EdgeCovering,
        RotorGeometrySpec::Interior { r_a, r_c } => rotor::CmiGeometry::Interior { r_a, r_c },
    };
    let mut lengths = Table::new("rotor_lengths", &["t", "xi2", "xi1_spinwave", "xi1_exact", "rho_s1", "rho_s2"]);
    let mut cmi = Table::new("rotor_cmi", &["t", "r_b", "cmi", "asymptote", "r_b_plus_1_over_t"]);
    let mut expo = Table::new("rotor_exponents", &["t", "q", "eta"]);
    for &t in &s.times {
        let l = rotor::rotor1d_lengths(t).ctx(|| format!("lengths at t = {t}"))?;
        let (rho1, rho2) = rotor::stiffness_constants(t).ctx(|| format!("stiffness at t = {t}"))?;
        lengths.push(row![t, l.xi2, l.xi1_spinwave, l.xi1_exact, rho1, rho2]);
        for &r in &s.r_b {
            let c = rotor::renyi2_cmi_rotor(r, t, geom).ctx(|| format!("rotor CMI at t = {t}, R_B = {r}"))?;
            cmi.push(row![t, r, c.value, c.asymptote, (r + 1) as f64 / t]);
        }
        for &q in &s.q {
            let eta = rotor::rotor2d_exponents(t, q).ctx(|| format!("2d exponent at Q = {q}"))?;
            expo.push(row![t, q, eta]);
        }
    }
    sink.csv(&lengths)?;
    if !cmi.rows.is_empty() {
        sink.csv(&cmi)?;
    }
    if !expo.rows.is_empty() {
        sink.csv(&expo)?;
    }
    Ok(())
}

fn rg(sink: &mut Sink, s: &RgSpec) -> Result<(), CliError> {
    check_positive("y0", s.y0)?;
    check_positive("threshold", s.threshold)?;
    if s.a.is_empty() || s.detunings.len() < 2 || s.detunings.iter().any(|d| !(*d > 0.0)) {
        return Err(usage("need at least one A and two positive detunings"));
    }
    let opts = RgOptions { threshold: s.threshold, record: false, ..RgOptions::default() };
    let mut tab = Table::new("p_vs_a", &["A", "p", "r2", "separatrix_s"]);
    for &a in &s.a {
        let fit = rotor::rg_exponent(a, s.y0, &s.detunings, opts).ctx(|| format!("RG exponent at A = {a}"))?;
        tab.push(row![a, fit.p, fit.r2, fit.separatrix_s]);
    }
    sink.csv(&tab)?;
    if let Some(g) = &s.flow_grid {
        let mut field = Table::new("flow_field", &["A", "s", "y", "ds", "dy"]);
        for &a in &s.a {
            for [sv, yv, ds, dy] in rotor::rg_flow_field(a, &g.s, &g.y) {
                field.push(row![a, sv, yv, ds, dy]);
            }
        }
        sink.csv(&field)?;
    }
    Ok(())
}

fn modelf(sink: &mut Sink, s: &ModelFSpec, seed: u64) -> Result<(), CliError> {
    if s.record_every == 0 || s.observables.is_empty() {
        return Err(usage("need record_every >= 1 and at least one observable"));
    }
    let lat = s.lattice.build()?;
    let params = ModelFParams { j: s.j, k: s.k, beta: s.beta, gamma_phi: s.gamma_phi, gamma_n: s.gamma_n, dt: s.dt };
    let mut st = ModelFState::at_rest(lat, params, seed).ctx(|| "Model F state".into())?;
    let mut cols = vec!["step", "time"];
    cols.extend(s.observables.iter().map(|o| o.name()));
    let mut tab = Table::new("modelf", &cols);
    let record = |st: &ModelFState, step: usize, tab: &mut Table| {
        let mut r = row![step, st.time];
        for o in &s.observables {
            r.push(
                match o {
                    Observable::FreeEnergy => st.free_energy(),
                    Observable::TotalDensity => st.total_density(),
                    Observable::BondOrder => st.bond_order(),
                    Observable::DensityVariance => st.density_variance(),
                }
                .into(),
            );
        }
        tab.push(r);
    };
    record(&st, 0, &mut tab);
    let mut done = 0;
    while done < s.steps {
        let n = s.record_every.min(s.steps - done);
        st.run(n).ctx(|| format!("Model F step {done}"))?;
        done += n;
        record(&st, done, &mut tab);
    }
    sink.csv(&tab)?;
    sink.json("modelf_final", &FieldSnapshot { time: st.time, phi: st.phi.clone(), n: st.n.clone() })
}
