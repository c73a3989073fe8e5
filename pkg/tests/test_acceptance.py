"""End-to-end acceptance checks.

Each test exercises one headline capability at its stated tolerance and
prints one ACCEPTANCE line (PASS/FAIL plus the measured numbers) before
asserting, so a failing run still reports every criterion.

Run with `pytest -s tests/test_acceptance.py` to see the report lines.
"""

import time

import numpy as np

from nvphonon import cli, closedform, dynamics, phonon, synth
from nvphonon.closedform import EnvelopeParams
from nvphonon.core import (
    TWO_PI,
    AngularRate,
    TimeTrace,
    rate_from_linear_mhz,
)
from nvphonon.estimate import (
    FitWindow,
    fit_depolarization,
    fit_exponential_window,
    fit_gamma_a1,
)

GAMMA_RAD = TWO_PI * 13.2e-3
GAMMA_ISC = TWO_PI * 16.0e-3


def _report(number, ok, detail):
    print(f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_01_eta_to_coefficient_round_trip():
    start = time.perf_counter()
    eta = AngularRate.from_linear_mhz(44.0)
    coeff = phonon.coefficient_from_eta(eta)
    a_mhz = coeff.value * 1e3 / TWO_PI
    eta_back = phonon.eta_from_coefficient(coeff)
    round_trip = abs(eta_back.value / eta.value - 1.0)
    elapsed = time.perf_counter() - start
    ok = abs(a_mhz - 2.0e-5) / 2.0e-5 < 0.02 and round_trip < 1e-12 \
        and elapsed < 1.0
    _report(1, ok, f"A/2pi = {a_mhz:.4e} MHz/K^5 (target 2.0e-5 within 2%), "
                   f"eta round trip {round_trip:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_02_fitted_mixing_law_values():
    start = time.perf_counter()
    form = phonon.MIXING_FIT_DEFAULT
    g5 = form.clamped(5.0).value * 1e3 / TWO_PI
    g20 = form.clamped(20.0).value * 1e3 / TWO_PI
    elapsed = time.perf_counter() - start
    ok = abs(g5 - 0.08) <= 0.005 and abs(g20 - 18.5) <= 0.1 and elapsed < 1.0
    _report(2, ok, f"Gamma_mix(5 K)/2pi = {g5:.4f} MHz (0.08 +/- 0.005), "
                   f"Gamma_mix(20 K)/2pi = {g20:.3f} MHz (18.5 +/- 0.1), "
                   f"{elapsed:.2f} s")
    assert ok


def test_criterion_03_closed_forms_match_rate_integration():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    cap = TWO_PI * 25e-3
    t = np.linspace(0.0, 200.0, 201)
    worst = 0.0
    for _ in range(100):
        gr, gm, gi = rng.uniform(0.0, cap, 3)
        pops = dynamics.evolve_rates(dynamics.build_a12_model(gr, gm, 0.0),
                                     [1.0, 0.0], t)
        rho_b, rho_d = closedform.depolarization_populations(gr, gm, t)
        for num, ana in ((pops["A1"].values, rho_b),
                         (pops["A2"].values, rho_d)):
            rel = np.abs(num - ana) / np.maximum(np.abs(ana), 1e-300)
            worst = max(worst, float(rel.max()))
        model = dynamics.build_a12_model(gr, gm, gi)
        for branch, p0 in (("A1", [1.0, 0.0]), ("A2", [0.0, 1.0])):
            pops = dynamics.evolve_rates(model, p0, t)
            num = pops["A1"].values + pops["A2"].values
            ana = closedform.fluorescence_a12(gr, gm, gi, branch, t)
            rel = np.abs(num - ana) / np.maximum(np.abs(ana), 1e-300)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10.0
    _report(3, ok, f"worst relative deviation {worst:.2e} over 100 draws, "
                   f"t in [0, 200] ns (tol 1e-8), {elapsed:.1f} s")
    assert ok


def _refined_extremum(t, f, i, dt):
    a, b, c = f[i - 1], f[i], f[i + 1]
    denom = a - 2.0 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return t[i] + shift * dt, b - 0.25 * (a - c) * shift


def _envelope_probe(gm, gt2, dt=0.01):
    """Worst extrema deviation and envelope-time error for one rate pair."""
    gr = rate_from_linear_mhz(13.2)
    omega = rate_from_linear_mhz(80.0)
    model = dynamics.ThreeLevelModel(gamma_rad_x=gr, gamma_rad_y=gr,
                                     gamma_mix_xy=gm, gamma_mix_yx=gm,
                                     gamma_t2=gt2, rabi=omega)
    t = np.arange(0.0, 60.0, dt)
    res = dynamics.evolve_lindblad(model, dynamics.DensityMatrix3.pure("g"), t)
    f = res.populations["x"].values + res.populations["y"].values
    params = EnvelopeParams(gr, gr, gm, gm, gt2)
    tau_truth = 1.0 / (0.75 * gr.value + 0.5 * (gm.value + gt2.value))
    imax = np.where((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:]))[0] + 1
    imin = np.where((f[1:-1] < f[:-2]) & (f[1:-1] <= f[2:]))[0] + 1
    maxima = [_refined_extremum(t, f, i, dt) for i in imax]
    minima = [_refined_extremum(t, f, i, dt) for i in imin]
    # upper extrema against the analytic envelope through one fitted scale;
    # peaks past ~4 envelope times sit on the steady background and are
    # not resolvable, so they are left out
    peaks = [(tp, fp) for tp, fp in maxima if np.exp(-tp / tau_truth) >= 0.02]
    tp = np.array([p[0] for p in peaks])
    fp = np.array([p[1] for p in peaks])
    g = closedform.rabi_envelope(params, tp)
    scale = float(np.sum(fp * g) / np.sum(g * g))
    extrema_err = float(np.max(np.abs(fp / (scale * g) - 1.0)))
    # oscillation visibility: each maximum against the preceding minimum
    pairs = []
    for tm, fm in maxima:
        before = [m for m in minima if m[0] < tm]
        if before:
            tn, fn = before[-1]
            pairs.append((0.5 * (tn + tm), 0.5 * (fm - fn)))
    pairs = [(tc, amp) for tc, amp in pairs if amp > 1e-3]
    mids = np.array([p[0] for p in pairs])
    amps = np.array([p[1] for p in pairs])
    slope = np.polyfit(mids, np.log(amps), 1)[0]
    tau_err = abs(-1.0 / slope / tau_truth - 1.0)
    return extrema_err, tau_err


def test_criterion_04_lindblad_envelope_and_decay_time():
    start = time.perf_counter()
    cap = 20.0
    cases = [(cap, cap), (0.0, 0.0), (0.0, cap), (cap, 0.0)]
    rng = np.random.default_rng(42)
    cases += [(rng.uniform(0.0, cap), rng.uniform(0.0, cap))
              for _ in range(12)]
    worst_extrema = worst_tau = 0.0
    for gm_mhz, gt2_mhz in cases:
        extrema_err, tau_err = _envelope_probe(rate_from_linear_mhz(gm_mhz),
                                               rate_from_linear_mhz(gt2_mhz))
        worst_extrema = max(worst_extrema, extrema_err)
        worst_tau = max(worst_tau, tau_err)
    elapsed = time.perf_counter() - start
    ok = worst_extrema < 0.03 and worst_tau < 0.05 and elapsed < 30.0
    _report(4, ok, f"worst extrema deviation {worst_extrema:.2%} (tol 3%), "
                   f"worst fitted tau error {worst_tau:.2%} (tol 5%) over "
                   f"{len(cases)} rate pairs, {elapsed:.1f} s")
    assert worst_extrema < 0.03
    assert worst_tau < 0.05
    assert elapsed < 30.0


def _recover_gamma_a1(seed, temps, window):
    points = []
    for k, temp in enumerate(temps):
        gm = phonon.MIXING_FIT_DEFAULT.clamped(temp)
        for j, branch in enumerate(("A1", "A2")):
            spec = synth.ExperimentSpec(
                model="a12",
                params=dict(gamma_rad=GAMMA_RAD, gamma_mix=gm,
                            gamma_isc=GAMMA_ISC, branch=branch),
                bin_width=0.25, span=120.0, total_counts=1_000_000.0,
                background_rate=0.0, pulse_edge=0.0,
                seed=seed * 100 + 2 * k + j)
            trace = synth.generate(spec)
            fit = fit_exponential_window(trace, window)
            points.append((temp, fit["rate"] - GAMMA_RAD,
                           fit.sigma_of("rate"), branch))
    result = fit_gamma_a1(points, phonon.MIXING_FIT_DEFAULT, GAMMA_RAD)
    return result["gamma_a1"] / (TWO_PI * 1e-3)


def test_criterion_05_crossing_rate_pipeline_recovery():
    start = time.perf_counter()
    temps = np.linspace(5.0, 26.0, 8)
    window = FitWindow(start=4.0, length=115.0)
    errors = np.array([_recover_gamma_a1(seed, temps, window) - 16.0
                       for seed in range(100)])
    hits = int(np.sum(np.abs(errors) <= 0.6))
    elapsed = time.perf_counter() - start
    ok = hits >= 95 and elapsed < 300.0
    _report(5, ok, f"{hits}/100 seeds within +/-0.6 MHz "
                   f"(max |error| {np.max(np.abs(errors)):.3f} MHz), "
                   f"{elapsed:.0f} s")
    assert ok


def test_criterion_06_branch_rates_converge_when_warm():
    start = time.perf_counter()

    def spread(temp):
        gm = phonon.MIXING_FIT_DEFAULT.clamped(temp)
        a, b = phonon.effective_isc_rates(GAMMA_RAD, GAMMA_ISC, gm)
        return abs(a.value - b.value) / (0.5 * (a.value + b.value))

    cold = spread(5.0)
    warm = {temp: spread(temp) for temp in (22.0, 23.0, 24.0, 25.0, 26.0)}
    elapsed = time.perf_counter() - start
    ok = cold > 1.0 and all(v < 0.10 for v in warm.values()) and elapsed < 10.0
    _report(6, ok, f"branch-rate spread {cold:.1%} at 5 K (need >100%), "
                   f"{max(warm.values()):.2%} worst for T >= 22 K "
                   f"(need <10%), {elapsed:.1f} s")
    assert ok


def test_criterion_07_depolarization_joint_fit():
    start = time.perf_counter()
    gm_cold = TWO_PI * 0.08e-3
    gm_warm = TWO_PI * 18.5e-3
    amplitude, t0, epsilon = 0.90, -3.6, 0.10
    times = np.arange(480) * 0.25 + 0.125

    def four_traces(transform):
        traces = []
        for temp, gm in ((5.0, gm_cold), (20.0, gm_warm)):
            bright, dark = closedform.observed_polarized_intensity(
                amplitude, epsilon, t0, GAMMA_RAD, gm, times)
            traces.append(TimeTrace(times, transform(bright),
                                    temperature=temp, channel="H"))
            traces.append(TimeTrace(times, transform(dark),
                                    temperature=temp, channel="V"))
        return traces

    exact = fit_depolarization(four_traces(lambda y: y),
                               gm_cold, gm_warm, GAMMA_RAD)
    worst_rel = max(abs(exact["amplitude"] / amplitude - 1.0),
                    abs(exact["t0"] / t0 - 1.0),
                    abs(exact["epsilon"] / epsilon - 1.0))

    # photon counting at a shared normalization so the joint amplitude
    # keeps its meaning across the four traces
    scale = 2.0e4
    rng = np.random.default_rng(2026)
    noisy = fit_depolarization(four_traces(lambda y: rng.poisson(scale * y)),
                               gm_cold, gm_warm, GAMMA_RAD, weights="poisson")
    amp_err = abs(noisy["amplitude"] / scale - amplitude)
    t0_err = abs(noisy["t0"] - t0)
    eps_err = abs(noisy["epsilon"] - epsilon)
    elapsed = time.perf_counter() - start
    ok = (worst_rel <= 1e-6 and amp_err <= 0.06 and t0_err <= 0.8
          and eps_err <= 0.02 and elapsed < 60.0)
    _report(7, ok, f"noiseless worst rel {worst_rel:.1e} (tol 1e-6); Poisson "
                   f"|dA| {amp_err:.4f} (tol 0.06), |dt0| {t0_err:.3f} ns "
                   f"(tol 0.8), |deps| {eps_err:.4f} (tol 0.02), "
                   f"{elapsed:.1f} s")
    assert ok


def test_criterion_08_envelope_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(2033)
    cap = TWO_PI * 20e-3
    t = np.linspace(0.0, 60.0, 21)
    worst_sum = worst_amp = worst_reduction = 0.0
    for _ in range(10_000):
        grx, gry, mxy, myx, gt2 = rng.uniform(0.0, cap, 5)
        _, _, amp_a, amp_b = closedform.envelope_timescales(
            EnvelopeParams(grx, gry, mxy, myx, gt2))
        worst_sum = max(worst_sum, abs(amp_a + amp_b - 1.0))
        sym = rng.uniform(0.0, cap)
        _, _, amp_a, _ = closedform.envelope_timescales(
            EnvelopeParams(grx, gry, sym, sym, gt2))
        worst_amp = max(worst_amp, abs(amp_a))
        gr, gi = rng.uniform(1e-4, cap, 2)
        for branch, rate in (("A1", gr + gi), ("A2", gr)):
            trace = closedform.fluorescence_a12(gr, 0.0, gi, branch, t)
            rel = np.abs(trace / np.exp(-rate * t) - 1.0)
            worst_reduction = max(worst_reduction, float(rel.max()))
        for branch in ("A1", "A2"):
            trace = closedform.fluorescence_a12(gr, gi, 0.0, branch, t)
            rel = np.abs(trace / np.exp(-gr * t) - 1.0)
            worst_reduction = max(worst_reduction, float(rel.max()))
    worst_degenerate = 0.0
    for gr in np.random.default_rng(2034).uniform(1e-4, cap, 100):
        for branch in ("A1", "A2"):
            near = closedform.fluorescence_a12(gr, 2e-13, 1e-13, branch, t)
            at_zero = closedform.fluorescence_a12(gr, 0.0, 0.0, branch, t)
            rel = np.abs(near / at_zero - 1.0)
            worst_degenerate = max(worst_degenerate, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = (worst_sum <= 1e-12 and worst_amp <= 1.0 / 3.0 + 1e-12
          and worst_reduction <= 1e-12 and worst_degenerate <= 1e-9
          and elapsed < 5.0)
    _report(8, ok, f"|A+B-1| <= {worst_sum:.1e}, sym |A| <= 1/3 + "
                   f"{max(worst_amp - 1.0 / 3.0, 0.0):.1e}, single-exponential "
                   f"reductions {worst_reduction:.1e}, degenerate limit "
                   f"{worst_degenerate:.1e}, 10^4 draws in {elapsed:.1f} s")
    assert ok


def test_criterion_09_branch_ratio_model_properties():
    start = time.perf_counter()
    overlap = phonon.OverlapTable.synthetic_default()
    coupling = phonon.PhononCoupling(eta=phonon.ETA_DEFAULT, cutoff=93.0)
    deltas = np.linspace(120.0, 460.0, 9)
    scan = phonon.ratio_scan(coupling, overlap, deltas)
    worst_invariance = 0.0
    for i, delta in enumerate(deltas):
        ratios = []
        for perp_ratio in (1.2, 2.4):
            so = phonon.SpinOrbit(perp_ratio=perp_ratio)
            ga1 = phonon.isc_rate_a1(so, overlap, delta)
            ge12 = phonon.isc_rate_e12(coupling, ga1, overlap, delta)
            ratios.append(ge12.value / ga1.value)
        worst_invariance = max(worst_invariance,
                               abs(ratios[0] / ratios[1] - 1.0),
                               abs(ratios[0] / scan.ratios[i] - 1.0))
    by_cutoff = [phonon.crossing_ratio(
        phonon.PhononCoupling(eta=phonon.ETA_DEFAULT, cutoff=cut),
        overlap, 430.0) for cut in (50.0, 93.0, 150.0)]
    unbounded = phonon.crossing_ratio(coupling, overlap, 430.0,
                                      unbounded=True)
    monotone = (by_cutoff[0] < by_cutoff[1] < by_cutoff[2] < unbounded)
    doubled = phonon.PhononCoupling(eta=AngularRate(2.0 *
                                                    phonon.ETA_DEFAULT.value),
                                    cutoff=93.0)
    linear = abs(phonon.crossing_ratio(doubled, overlap, 430.0)
                 / (2.0 * phonon.crossing_ratio(coupling, overlap, 430.0))
                 - 1.0)
    at_zero = phonon.crossing_ratio(coupling, overlap, 0.0)
    small_gap = [phonon.crossing_ratio(coupling, overlap, d)
                 for d in (2.0, 20.0, 200.0)]
    vanishes = at_zero == 0.0 and small_gap[0] < small_gap[1] < small_gap[2]
    elapsed = time.perf_counter() - start
    ok = (worst_invariance <= 1e-12 and monotone and linear <= 1e-12
          and vanishes)
    _report(9, ok, f"spin-orbit rescaling invariance {worst_invariance:.1e} "
                   f"(tol 1e-12), cutoff-monotone {monotone}, eta-linearity "
                   f"{linear:.1e}, ratio(0) = {at_zero}, {elapsed:.1f} s; "
                   "measured-overlap exclusion boundaries are out of scope "
                   "here, demos/isc_branch_ratio.py runs the scan on the "
                   "synthetic overlap instead")
    assert ok


def test_criterion_10_determinism(tmp_path, capsys):
    start = time.perf_counter()
    code_first = cli.main(["verify"])
    out_first = capsys.readouterr().out
    code_second = cli.main(["verify"])
    out_second = capsys.readouterr().out
    spec = synth.ExperimentSpec(model="exponential",
                                params=dict(rate=GAMMA_RAD),
                                bin_width=0.25, span=60.0,
                                total_counts=1e5, seed=11)
    same_counts = np.array_equal(synth.generate(spec).values,
                                 synth.generate(spec).values)
    config = tmp_path / "sim.cfg"
    config.write_text("model.name = exponential\nmodel.rate_mhz = 13.2\n"
                      "synth.total_counts = 100000\nsynth.bin_ns = 0.25\n"
                      "synth.span_ns = 60.0\nsynth.seed = 3\n")
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    code_a = cli.main(["simulate", "--config", str(config),
                       "--out", str(out_a)])
    code_b = cli.main(["simulate", "--config", str(config),
                       "--out", str(out_b)])
    capsys.readouterr()
    same_files = out_a.read_bytes() == out_b.read_bytes()
    elapsed = time.perf_counter() - start
    ok = (code_first == 0 and code_second == 0 and out_first == out_second
          and same_counts and code_a == 0 and code_b == 0 and same_files
          and elapsed < 60.0)
    with capsys.disabled():
        _report(10, ok, f"verify exit codes ({code_first}, {code_second}), "
                        f"reports identical {out_first == out_second}, "
                        f"seeded generation identical {same_counts}, "
                        f"simulate output identical {same_files}, "
                        f"{elapsed:.1f} s")
    assert ok
