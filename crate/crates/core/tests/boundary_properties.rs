use isac_cr::benchmarks::{benchmark_points, default_knob_grid, Scheme};
use isac_cr::boundary::{pareto_sweep, Spacing, SweepSpec};
use isac_cr::channel::{rician_channel, ChannelSet, SystemParams, DEFAULT_LOS_ANGLE};
use isac_cr::corner::rate_max_waterfill;
use isac_cr::metrics::CrbMetric;

fn reference() -> (SystemParams, ChannelSet) {
    let p = SystemParams::default();
    let ch = rician_channel(&p, DEFAULT_LOS_ANGLE, DEFAULT_LOS_ANGLE);
    (p, ch)
}

#[test]
fn sweeps_are_concave_and_feasible() {
    let (p, ch) = reference();
    for metric in CrbMetric::ALL {
        for spacing in [Spacing::Log, Spacing::Linear] {
            let spec = SweepSpec { spacing, ..SweepSpec::new(metric, 40) };
            let sweep = pareto_sweep(&spec, &ch, &p).unwrap();
            let pts = &sweep.points;
            assert_eq!(pts.len(), 40);
            for pt in pts {
                let tol = if metric.is_log() { 1e-6 * pt.gamma.abs().max(1.0) } else { 1e-6 * pt.gamma };
                assert!(pt.crb_achieved <= pt.gamma + tol, "{metric}: {} > {}", pt.crb_achieved, pt.gamma);
            }
            // the region is convex, so no point sits below the chord of its neighbours
            for w in pts.windows(3) {
                let (a, b, c) = (&w[0], &w[1], &w[2]);
                let t = (b.gamma - a.gamma) / (c.gamma - a.gamma);
                let chord = a.rate + t * (c.rate - a.rate);
                assert!(b.rate >= chord - 1e-6, "{metric} {spacing:?} at {:e}: {} below chord {chord}", b.gamma, b.rate);
            }
        }
    }
}

#[test]
fn strongest_eigenmode_is_near_optimal_at_low_snr() {
    let p = SystemParams { m_tx: 4, n_rx_comm: 4, power: 1.0, ..SystemParams::default() };
    let ch = rician_channel(&p, DEFAULT_LOS_ANGLE, DEFAULT_LOS_ANGLE);
    let optimal = rate_max_waterfill(&ch, &p, CrbMetric::Trace).rate;
    let best = benchmark_points(Scheme::SplitSem, &ch, &p, CrbMetric::Trace, &default_knob_grid(101))
        .unwrap()
        .iter()
        .map(|b| b.rate)
        .fold(0.0, f64::max);
    assert!(best <= optimal + 1e-12);
    assert!(best >= 0.98 * optimal, "{best} vs {optimal}");
}

#[test]
fn splitting_curves_start_at_the_sensing_corner() {
    let (p, ch) = reference();
    let m = p.m_tx as f64;
    let r = ch.rank_r as f64;
    let grid = [r / m, 1.0 / m];
    let ep = benchmark_points(Scheme::SplitEp, &ch, &p, CrbMetric::Trace, &grid[..1]).unwrap();
    let sem = benchmark_points(Scheme::SplitSem, &ch, &p, CrbMetric::Trace, &grid[1..]).unwrap();
    let crb_min = p.noise_sense * p.n_rx_sense as f64 * m * m / (p.cpi() * p.power);
    for b in ep.iter().chain(&sem) {
        assert!((b.crb - crb_min).abs() < 1e-12 * crb_min, "{:?}", b);
    }
}
