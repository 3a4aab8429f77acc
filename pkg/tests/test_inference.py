import itertools

import numpy as np
import pytest
from scipy.special import betaln, digamma, expit, gammaln, logsumexp

from system_claims import ClaimSet, ObjectDomain, parse_claims
from system_inference import (
    MONOTONICITY_SLACK,
    FitOptions,
    NumericalError,
    compute_elbo,
    elbo_terms,
    expected_log_assignment,
    fit,
    init_state,
    sweep,
    tail_geometric_log_denominator,
    update_alpha,
    update_beta,
    update_nu,
    update_phi,
    update_sticks,
    update_tau,
)
from system_priors import Hyperparams, dirichlet_prior_counts
from system_reporting import build_report, evaluate, voting_baseline

UNIT = dict(eta_reliable=1.0, theta_reliable=1.0, eta_unreliable=1.0, theta_unreliable=1.0)


def one_object_claims(labels, K=2):
    domain = ObjectDomain('o0', tuple(f'v{k}' for k in range(K)))
    claims = [(n, 0, k) for n, k in enumerate(labels)]
    return ClaimSet.from_indices([f's{n}' for n in range(len(labels))], [domain], claims)


# ==================== Initialization ====================

def test_init_nu_is_smoothed_histogram():
    cs = one_object_claims([0, 0, 1])
    state = init_state(cs, Hyperparams(truncation=2))
    np.testing.assert_allclose(state.nu[0], [0.6, 0.4])


def test_init_nu_is_uniform_for_unclaimed_object():
    objects = [ObjectDomain('o0', ('a', 'b')), ObjectDomain('o1', ('a', 'b', 'c'))]
    cs = ClaimSet.from_indices(['s0'], objects, [(0, 0, 1)])
    state = init_state(cs, Hyperparams(truncation=2))
    np.testing.assert_allclose(state.nu[1], [1 / 3, 1 / 3, 1 / 3])


def test_init_tau_sits_at_prior_mean(small_claims):
    state = init_state(small_claims, Hyperparams(b1=2.0, b0=2.0, truncation=3))
    np.testing.assert_allclose(state.tau, 0.5)


def test_init_phi_rows_are_distributions(small_claims):
    state = init_state(small_claims, Hyperparams(truncation=3))
    np.testing.assert_allclose(state.phi.sum(axis=1), 1.0)
    assert np.all(state.tail_mass == 0.0)


def test_init_phi_depends_on_source_id_not_position(small_claims, small_csv):
    lines = small_csv.strip().splitlines()
    reordered = parse_claims('\n'.join([lines[0]] + lines[1:][::-1]) + '\n')
    a = init_state(small_claims, Hyperparams(truncation=3), seed=5)
    b = init_state(reordered, Hyperparams(truncation=3), seed=5)
    for n, source_id in enumerate(small_claims.source_ids):
        np.testing.assert_array_equal(a.phi[n], b.phi[reordered.source_ids.index(source_id)])


# ==================== Step 1 ====================

def test_alpha_without_claims_is_the_reliable_prior():
    objects = [ObjectDomain('o0', ('a', 'b')), ObjectDomain('o1', ('a', 'b'))]
    cs = ClaimSet.from_indices(['s0'], objects, [(0, 1, 0)])
    h = Hyperparams(eta_reliable=5.0, theta_reliable=1.0, truncation=2)
    state = init_state(cs, h)
    state.tau[:] = 1.0
    state.nu[0] = [0.0, 1.0]
    update_alpha(state, cs, h)
    np.testing.assert_allclose(state.alpha[:, 0], [[1.0, 5.0], [1.0, 5.0]])


def test_alpha_counts_one_claim_under_careless_prior():
    cs = one_object_claims([1], K=3)
    h = Hyperparams(truncation=2)
    state = init_state(cs, h)
    state.phi[0] = [1.0, 0.0]
    state.tau[:] = 0.0
    update_alpha(state, cs, h)
    np.testing.assert_allclose(state.alpha[0, 0], [1.0, 2.0, 1.0])
    np.testing.assert_allclose(state.alpha[1, 0], [1.0, 1.0, 1.0])


def test_alpha_pads_short_domains_with_ones():
    objects = [ObjectDomain('o0', ('a', 'b')), ObjectDomain('o1', ('a', 'b', 'c'))]
    cs = ClaimSet.from_indices(['s0', 's1'], objects, [(0, 0, 1), (1, 1, 2)])
    state = init_state(cs, Hyperparams(truncation=2))
    assert np.all(state.alpha[:, 0, 2] == 1.0)
    assert np.all(state.alpha > 0)


# ==================== Step 2 ====================

def test_beta_sums_tau():
    objects = [ObjectDomain(f'o{m}', ('a', 'b')) for m in range(4)]
    cs = ClaimSet.from_indices(['s0'], objects, [(0, 0, 0)])
    h = Hyperparams(b1=2.0, b0=2.0, truncation=2)
    state = init_state(cs, h)
    state.tau[:] = 1.0
    np.testing.assert_allclose(update_beta(state, h), [[6.0, 2.0], [6.0, 2.0]])


def test_beta_with_half_tau_is_symmetric():
    objects = [ObjectDomain(f'o{m}', ('a', 'b')) for m in range(10)]
    cs = ClaimSet.from_indices(['s0'], objects, [(0, 0, 0)])
    h = Hyperparams(b1=1.0, b0=1.0, truncation=2)
    state = init_state(cs, h)
    state.tau[:] = 0.5
    np.testing.assert_allclose(update_beta(state, h), [[6.0, 6.0], [6.0, 6.0]])


def test_beta_without_objects_is_the_prior(empty_claims):
    h = Hyperparams(b1=3.0, b0=1.5, truncation=2)
    state = init_state(empty_claims, h)
    np.testing.assert_allclose(update_beta(state, h), [[3.0, 1.5], [3.0, 1.5]])


# ==================== Step 3 ====================

def test_tau_with_symmetric_evidence_is_half():
    cs = one_object_claims([0, 1])
    h = Hyperparams(truncation=2, **UNIT)
    state = init_state(cs, h)
    state.beta[:] = [2.0, 2.0]
    np.testing.assert_allclose(update_tau(state, cs, h), 0.5)


def test_tau_with_unit_counts_is_logistic_of_reliability():
    cs = one_object_claims([0, 1])
    h = Hyperparams(truncation=2, **UNIT)
    state = init_state(cs, h)
    state.beta[:] = [5.0, 1.0]
    expected = expit(digamma(5.0) - digamma(1.0))
    np.testing.assert_allclose(update_tau(state, cs, h), expected)
    assert expected == pytest.approx(0.889, abs=1e-3)


def test_tau_rises_when_alpha_concentrates_on_the_truth():
    cs = one_object_claims([0, 0])
    h = Hyperparams(eta_reliable=10.0, theta_reliable=1.0, truncation=2)
    state = init_state(cs, h)
    state.alpha[:, 0] = [30.0, 1.0]
    state.nu[0] = [1.0, 0.0]
    state.beta[:] = [2.0, 2.0]
    assert np.all(update_tau(state, cs, h) > 0.5)


def test_tau_matches_brute_force_objective():
    cs = one_object_claims([0, 1, 1], K=3)
    h = Hyperparams(eta_reliable=5.0, theta_reliable=2.0, eta_unreliable=1.0, theta_unreliable=3.0, truncation=2)
    state = init_state(cs, h, seed=3)
    sweep(state, cs, h)
    update_tau(state, cs, h)
    best = compute_elbo(state, cs, h)
    for delta in (-0.05, 0.05):
        perturbed = state.copy()
        perturbed.tau = np.clip(perturbed.tau + delta, 1e-9, 1 - 1e-9)
        assert compute_elbo(perturbed, cs, h) <= best + 1e-10


# ==================== Step 4 ====================

def test_nu_is_uniform_when_soft_counts_are_equal():
    cs = one_object_claims([0, 0, 1])
    h = Hyperparams(truncation=2, **UNIT)
    state = init_state(cs, h)
    sweep(state, cs, h)
    np.testing.assert_allclose(update_nu(state, cs, h), [[0.5, 0.5]])


def test_nu_follows_a_reliable_group():
    cs = one_object_claims([1])
    h = Hyperparams(eta_reliable=5.0, theta_reliable=1.0, truncation=2)
    state = init_state(cs, h)
    state.tau[:] = 1.0
    state.alpha[:, 0] = [1.0, 9.0]
    assert np.argmax(update_nu(state, cs, h)[0]) == 1


def test_nu_is_even_for_opposite_groups():
    cs = one_object_claims([0, 1])
    h = Hyperparams(truncation=2)
    state = init_state(cs, h)
    state.tau[:] = 1.0
    state.alpha[0, 0] = [9.0, 1.0]
    state.alpha[1, 0] = [1.0, 9.0]
    np.testing.assert_allclose(update_nu(state, cs, h), [[0.5, 0.5]])


def test_nu_is_zero_on_padded_slots():
    objects = [ObjectDomain('o0', ('a', 'b')), ObjectDomain('o1', ('a', 'b', 'c'))]
    cs = ClaimSet.from_indices(['s0'], objects, [(0, 0, 1), (0, 1, 2)])
    h = Hyperparams(truncation=2)
    state = init_state(cs, h)
    nu = update_nu(state, cs, h)
    assert nu[0, 2] == 0.0
    np.testing.assert_allclose(nu.sum(axis=1), 1.0)


# ==================== Step 5 ====================

def test_phi_without_claims_follows_stick_expectations():
    cs = ClaimSet.from_indices(['s0'], [ObjectDomain('o0', ('a', 'b'))], [])
    h = Hyperparams(truncation=3)
    state = init_state(cs, h)
    state.stick_posteriors[:] = [[2.0, 3.0], [1.5, 4.0], [1.0, 2.0]]
    update_phi(state, cs, h)
    e_assign, _ = expected_log_assignment(state.stick_posteriors)
    np.testing.assert_allclose(state.phi[0] / state.phi[0, 0], np.exp(e_assign - e_assign[0]))
    assert state.phi[0].sum() + state.tail_mass[0] == pytest.approx(1.0)


def test_tail_denominator_for_unit_kappa():
    assert np.exp(tail_geometric_log_denominator(1.0)) == pytest.approx(1 - np.exp(-1), abs=1e-4)


def test_identical_sources_get_identical_rows():
    objects = [ObjectDomain(f'o{m}', ('a', 'b', 'c')) for m in range(10)]
    rng = np.random.default_rng(6)
    shared = rng.integers(0, 3, size=10)
    other = rng.integers(0, 3, size=(3, 10))
    claims = [(0, m, int(shared[m])) for m in range(10)] + [(1, m, int(shared[m])) for m in range(10)]
    claims += [(2 + i, m, int(other[i, m])) for i in range(3) for m in range(10)]
    cs = ClaimSet.from_indices([f's{n}' for n in range(5)], objects, claims)
    result = fit(cs, Hyperparams(truncation=2), FitOptions(max_sweeps=100, tol=1e-10))
    phi = result.state.phi
    np.testing.assert_array_equal(phi[0], phi[1])
    assert np.argmax(phi[0]) == np.argmax(phi[1])


# ==================== Step 6 ====================

def test_sticks_with_every_source_in_group_one():
    objects = [ObjectDomain('o0', ('a', 'b'))]
    cs = ClaimSet.from_indices([f's{n}' for n in range(10)], objects, [(n, 0, 0) for n in range(10)])
    h = Hyperparams(kappa=3.0, truncation=4)
    state = init_state(cs, h)
    state.phi[:] = [1.0, 0.0, 0.0, 0.0]
    state.tail_mass[:] = 0.0
    sticks = update_sticks(state, h)
    np.testing.assert_allclose(sticks[0], [11.0, 3.0])


def test_sticks_with_uniform_phi():
    objects = [ObjectDomain('o0', ('a', 'b'))]
    cs = ClaimSet.from_indices([f's{n}' for n in range(4)], objects, [(n, 0, 0) for n in range(4)])
    h = Hyperparams(kappa=2.0, truncation=4)
    state = init_state(cs, h)
    state.phi[:] = 0.25
    state.tail_mass[:] = 0.0
    sticks = update_sticks(state, h)
    np.testing.assert_allclose(sticks[0], [2.0, 2.0 + 3.0])


def test_sticks_without_sources_are_the_prior(empty_claims):
    h = Hyperparams(kappa=4.0, truncation=2)
    state = init_state(empty_claims, h)
    np.testing.assert_allclose(update_sticks(state, h), [[1.0, 4.0], [1.0, 4.0]])


# ==================== Objective ====================

def test_empty_claim_set_has_zero_elbo(empty_claims):
    h = Hyperparams(truncation=2)
    state = init_state(empty_claims, h)
    assert compute_elbo(state, empty_claims, h) == pytest.approx(0.0, abs=1e-12)
    result = fit(empty_claims, h)
    assert result.elbo == pytest.approx(0.0, abs=1e-12)


def test_elbo_terms_are_finite(small_claims, default_hyperparams):
    state = init_state(small_claims, default_hyperparams)
    terms = elbo_terms(state, small_claims, default_hyperparams)
    assert set(terms) == {
        'sticks', 'assignments', 'likelihood', 'observation_params',
        'reliability', 'general_reliability', 'true_values',
    }
    assert all(np.isfinite(v) for v in terms.values())


def test_non_finite_elbo_raises_with_terms(small_claims, default_hyperparams):
    state = init_state(small_claims, default_hyperparams)
    state.beta[0, 0] = np.nan
    with pytest.raises(NumericalError) as info:
        compute_elbo(state, small_claims, default_hyperparams)
    assert info.value.exit_code == 3
    assert 'general_reliability' in info.value.terms


@pytest.mark.parametrize('seed', range(4))
def test_every_step_increases_the_elbo(planted_claims, seed):
    cs, _ = planted_claims
    h = Hyperparams(kappa=2.0, eta_reliable=5.0, theta_reliable=1.0, eta_unreliable=1.0,
                    theta_unreliable=2.0, truncation=6)
    state = init_state(cs, h, seed=seed)
    previous = [compute_elbo(state, cs, h)]

    def check(name, current):
        value = compute_elbo(current, cs, h)
        assert value >= previous[0] - MONOTONICITY_SLACK, name
        previous[0] = value

    for _ in range(8):
        sweep(state, cs, h, on_step=check)


def test_fit_trace_is_monotone(planted_claims):
    cs, _ = planted_claims
    result = fit(cs, Hyperparams(truncation=8), FitOptions(max_sweeps=40, tol=0.0))
    trace = np.array([result.initial_elbo] + result.elbo_trace)
    assert np.all(np.diff(trace) >= -MONOTONICITY_SLACK)


def test_state_stays_normalized_and_positive(planted_claims):
    cs, _ = planted_claims
    state = fit(cs, Hyperparams(truncation=5), FitOptions(max_sweeps=20)).state
    np.testing.assert_allclose(state.phi.sum(axis=1) + state.tail_mass, 1.0)
    np.testing.assert_allclose(state.nu.sum(axis=1), 1.0)
    assert np.all((state.tau >= 0) & (state.tau <= 1))
    assert np.all(state.alpha > 0) and np.all(state.beta > 0) and np.all(state.stick_posteriors > 0)


def test_infinite_tolerance_runs_one_sweep(small_claims, default_hyperparams):
    result = fit(small_claims, default_hyperparams, FitOptions(tol=float('inf')))
    assert result.iterations == 1
    assert result.converged


def test_max_sweeps_bounds_the_run(planted_claims):
    cs, _ = planted_claims
    result = fit(cs, Hyperparams(truncation=4), FitOptions(max_sweeps=3, tol=0.0))
    assert result.iterations == 3
    assert not result.converged


def test_fit_is_deterministic(planted_claims):
    cs, _ = planted_claims
    a = fit(cs, Hyperparams(truncation=6), FitOptions(max_sweeps=15, seed=9))
    b = fit(cs, Hyperparams(truncation=6), FitOptions(max_sweeps=15, seed=9))
    assert a.elbo_trace == b.elbo_trace
    np.testing.assert_array_equal(a.state.phi, b.state.phi)


def test_truncation_is_clamped_to_source_count(small_claims):
    result = fit(small_claims, Hyperparams(truncation=20), FitOptions(max_sweeps=2))
    assert result.state.truncation == small_claims.num_sources


def test_source_permutation_is_equivariant(small_csv):
    lines = small_csv.strip().splitlines()
    original = parse_claims(small_csv)
    shuffled = parse_claims('\n'.join([lines[0]] + lines[1:][::-1]) + '\n')
    h = Hyperparams(truncation=3)
    opts = FitOptions(max_sweeps=25, tol=0.0)
    a = build_report(fit(original, h, opts), original)
    b = build_report(fit(shuffled, h, opts), shuffled)
    scores_a = {s.source_id: s.score for s in a.sources}
    scores_b = {s.source_id: s.score for s in b.sources}
    for source_id, score in scores_a.items():
        assert scores_b[source_id] == pytest.approx(score, abs=1e-6)

    def by_label(report, cs):
        return {
            (o.object_id, label): p
            for o, domain in zip(report.objects, cs.objects)
            for label, p in zip(domain.labels, o.posterior)
        }

    posterior_a, posterior_b = by_label(a, original), by_label(b, shuffled)
    assert posterior_a.keys() == posterior_b.keys()
    for key, p in posterior_a.items():
        assert posterior_b[key] == pytest.approx(p, abs=1e-6)


def test_map_truth_beats_voting_on_planted_data(planted_claims):
    cs, truth = planted_claims
    h = Hyperparams(kappa=5.0, eta_reliable=10.0, theta_reliable=1.0, truncation=10)
    report = build_report(fit(cs, h), cs)
    labels = truth.truth_labels()
    mss = evaluate(report.predictions(), labels).accuracy
    votes = evaluate({v.object_id: v.label for v in voting_baseline(cs)}, labels).accuracy
    assert mss >= 0.8
    assert mss >= votes - 0.05


# ==================== Evidence Oracle ====================

def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        yield [[first]] + partition
        for i in range(len(partition)):
            yield partition[:i] + [[first] + partition[i]] + partition[i + 1:]


def exact_log_evidence(cs: ClaimSet, h: Hyperparams) -> float:
    """
    log p(claims) by enumeration: partitions of the sources under the Chinese
    restaurant process, reliability vectors with u integrated out, true values.
    """
    N, M = cs.num_sources, cs.num_objects
    sizes = [int(k) for k in cs.domain_sizes]
    claimed = {(c.source_index, c.object_index): c.value_index for c in cs.claims}

    def cluster_term(cluster, t):
        terms = []
        for r in itertools.product((0, 1), repeat=M):
            on = sum(r)
            value = betaln(h.b1 + on, h.b0 + M - on) - betaln(h.b1, h.b0)
            for m in range(M):
                counts = np.zeros(sizes[m])
                for n in cluster:
                    if (n, m) in claimed:
                        counts[claimed[(n, m)]] += 1
                prior = dirichlet_prior_counts(h, r[m], t[m], sizes[m])
                value += (
                    gammaln(prior.sum()) - gammaln(prior.sum() + counts.sum())
                    + (gammaln(prior + counts) - gammaln(prior)).sum()
                )
            terms.append(value)
        return logsumexp(terms)

    log_norm = gammaln(h.kappa + N) - gammaln(h.kappa)
    total = []
    for partition in set_partitions(list(range(N))):
        log_crp = len(partition) * np.log(h.kappa) + sum(gammaln(len(c)) for c in partition) - log_norm
        for t in itertools.product(*(range(k) for k in sizes)):
            log_t = -sum(np.log(k) for k in sizes)
            total.append(log_crp + log_t + sum(cluster_term(c, t) for c in partition))
    return float(logsumexp(total))


def tiny_instances():
    configs = [
        Hyperparams(truncation=2),
        Hyperparams(kappa=1.0, eta_reliable=10.0, theta_reliable=1.0, eta_unreliable=1.0,
                    theta_unreliable=5.0, truncation=2),
    ]
    instances = []
    for seed in range(24):
        rng = np.random.default_rng(seed)
        N, M = 1 + seed % 3, 1 + (seed // 3) % 2
        objects = [ObjectDomain(f'o{m}', ('a', 'b')) for m in range(M)]
        claims = [(n, m, int(rng.integers(2))) for n in range(N) for m in range(M) if rng.random() < 0.8]
        if not claims:
            claims = [(0, 0, 0)]
        cs = ClaimSet.from_indices([f's{n}' for n in range(N)], objects, claims)
        instances.append((cs, configs[seed % 2]))
    return instances


def test_set_partitions_counts_bell_numbers():
    assert [sum(1 for _ in set_partitions(list(range(n)))) for n in range(5)] == [1, 1, 2, 5, 15]


def test_crp_prior_sums_to_one():
    cs = ClaimSet.from_indices(['s0', 's1', 's2'], [ObjectDomain('o0', ('a',))], [])
    assert exact_log_evidence(cs, Hyperparams(kappa=2.5, truncation=2)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('index', range(24))
def test_elbo_bounds_exact_evidence(index):
    cs, h = tiny_instances()[index]
    result = fit(cs, h, FitOptions(max_sweeps=500, tol=1e-12))
    evidence = exact_log_evidence(cs, h)
    assert result.elbo <= evidence + 1e-8, f'margin {evidence - result.elbo:.3e}'
