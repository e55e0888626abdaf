import json
import random
from fractions import Fraction

import pytest

from pda_kit import netsim, paillier, pda
from pda_kit.bus import Bus
from pda_kit.errors import (
    ExtractionFailed,
    GroupBelowThreshold,
    KeyMissing,
    MissingEncoding,
    RingTooSmall,
    SlotReused,
)
from pda_kit.rng import Rng


def modular_interpolate_zero_constant(points: dict[int, int], target: int, modulus: int) -> int:
    """Oracle: value at `target` of the zero-constant polynomial through
    `points`, via exact rational Lagrange over points + (0, 0)."""
    full = dict(points)
    full[0] = 0
    ids = sorted(full)
    total = Fraction(0)
    for i in ids:
        basis = Fraction(1)
        for j in ids:
            if j != i:
                basis *= Fraction(target - j, i - j)
        total += full[i] * basis
    scale = total.denominator
    inv = pow(scale, -1, modulus)
    return total.numerator * inv % modulus


# ---------------------------------------------------------------------------
# setup
# ---------------------------------------------------------------------------

def test_setup_invariants_and_determinism():
    params = pda.setup(8, 4, 3, Rng(3))
    assert pow(params.h, params.N_tilde, params.N) == 1
    assert params.h != 1
    assert params == pda.setup(8, 4, 3, Rng(3))
    assert params != pda.setup(8, 4, 3, Rng(4))


def test_setup_rejects_bad_thresholds():
    with pytest.raises(ValueError):
        pda.setup(8, 2, 3, Rng(0))


def test_params_json_roundtrip():
    params = pda.setup(8, 4, 3, Rng(3))
    assert pda.PdaParams.from_json(params.to_json()) == params


# ---------------------------------------------------------------------------
# ring share
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy_params():
    return pda.setup(16, 6, 3, Rng("ringparams"))


def _ring(params, n, seed, k=0):
    bus = Bus(range(1, n + 1))
    y = pda.ring_share(bus, params, Rng(seed).fork("ring"), ids=range(1, n + 1), k_collusion=k)
    return bus, y


def test_ring_share_product_one(toy_params):
    bus, y = _ring(toy_params, 6, "r1")
    prod = 1
    for v in y.values():
        prod = prod * v % toy_params.N_tilde
    assert prod == 1
    # exactly one broadcast per party, single round
    assert len(bus.rounds) == 1
    assert sorted(m.sender for m in bus.rounds[0]) == list(range(1, 7))


def test_ring_share_minimal_three(toy_params):
    _, y = _ring(toy_params, 3, "r2")
    prod = 1
    for v in y.values():
        prod = prod * v % toy_params.N_tilde
    assert prod == 1


def test_hardened_ring_product_one(toy_params):
    bus, y = _ring(toy_params, 5, "r3", k=1)
    prod = 1
    for v in y.values():
        prod = prod * v % toy_params.N_tilde
    assert prod == 1
    assert len(bus.rounds) == 2  # one extra relay round for k=1


def test_hardened_k0_equals_base(toy_params):
    _, base = _ring(toy_params, 5, "same-seed", k=0)
    bus = Bus(range(1, 6))
    again = pda.ring_share(
        bus, toy_params, Rng("same-seed").fork("ring"), ids=range(1, 6), k_collusion=0
    )
    assert base == again


def test_ring_too_small(toy_params):
    with pytest.raises(RingTooSmall):
        _ring(toy_params, 3, "r4", k=1)


# ---------------------------------------------------------------------------
# keygen
# ---------------------------------------------------------------------------

def test_keygen_count_and_cancellation(pda_system):
    system, _ = pda_system
    params = system.params
    n = len(system.enc_keys)
    rnd = random.Random(4)
    for key in system.enc_keys.values():
        assert sorted(key.evaluations) == list(range(2, n - 1 + 1))
        assert len(key.evaluations) == n - 2
    ids = sorted(system.enc_keys)
    for _ in range(50):
        size = rnd.randint(params.theta_min, n)
        group = sorted(rnd.sample(ids, size))
        weights = pda.lagrange_weights(group).weights
        total = sum(
            system.enc_keys[i].evaluations[size - 1] * weights[i] for i in group
        )
        assert total % params.N_tilde == 0


def test_keygen_points_interpolate(pda_system):
    system, _ = pda_system
    nt = system.params.N_tilde
    ids = sorted(system.enc_keys)
    for d in (2, 3):
        points = {i: system.enc_keys[i].evaluations[d] for i in ids[:d]}
        for target in ids[d:]:
            predicted = modular_interpolate_zero_constant(points, target, nt)
            assert predicted == system.enc_keys[target].evaluations[d]


def test_keygen_extraction_failed(toy_params):
    bus = Bus(range(1, 5))
    y = pda.ring_share(bus, toy_params, Rng("ek").fork("ring"), ids=range(1, 5))
    y[2] = y[2] * 3 % toy_params.N_tilde  # breaks prod Y = 1
    with pytest.raises(ExtractionFailed):
        pda.keygen(Bus(range(1, 5)), toy_params, Rng("ek2"), y, degrees=[2])


def test_mask_cancellation_invariant(pda_system):
    # prod_i H(t)^{q*lambda} = 1 mod N over random groups and slots
    system, _ = pda_system
    params = system.params
    rnd = random.Random(5)
    ids = sorted(system.enc_keys)
    for _ in range(25):
        size = rnd.randint(params.theta_min, len(ids))
        group = sorted(rnd.sample(ids, size))
        weights = pda.lagrange_weights(group).reduced(params.N_tilde)
        t = rnd.randrange(1 << 20)
        ht = params.hash_slot(t)
        prod = 1
        for i in group:
            exp = pda.mask_exponent(params, system.enc_keys[i], group, weights)
            prod = prod * pow(ht, exp, params.N) % params.N
        assert prod == 1


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------

def _query(system, m=2, start=0, participants=None):
    ids = tuple(sorted(system.enc_keys)) if participants is None else tuple(participants)
    exponents = {ids[2]: {0: 1}, ids[3]: {0: 1, 1: 2}}
    return pda.PdaQuery(
        coeffs=(1,) * m,
        exponents=exponents,
        participants=ids,
        window=pda.Window(start, m),
    )


def test_encode_pure_mask(pda_system):
    system, _ = pda_system
    params = system.params
    group = sorted(system.enc_keys)
    key = system.enc_keys[group[0]]
    weights = pda.lagrange_weights(group).reduced(params.N_tilde)
    c = pda.encode_value(params, key, group, x=1, e=0, t=17)
    expected = pow(params.hash_slot(17), pda.mask_exponent(params, key, group, weights), params.N)
    assert c == expected


def test_encode_deterministic(pda_system):
    system, _ = pda_system
    params = system.params
    group = sorted(system.enc_keys)
    key = system.enc_keys[group[1]]
    a = pda.encode_value(params, key, group, x=5, e=2, t=99)
    b = pda.encode_value(params, key, group, x=5, e=2, t=99)
    assert a == b


def test_encode_product_unmasks(pda_system):
    system, _ = pda_system
    params = system.params
    rnd = random.Random(6)
    ids = sorted(system.enc_keys)
    for trial in range(10):
        group = sorted(rnd.sample(ids, rnd.randint(3, len(ids))))
        t = 1000 + trial
        xs = {i: rnd.randrange(1, params.N) for i in group}
        es = {i: rnd.randint(0, 3) for i in group}
        prod = 1
        expected = 1
        for i in group:
            c = pda.encode_value(params, system.enc_keys[i], group, xs[i], es[i], t)
            prod = prod * c % params.N
            expected = expected * pow(xs[i], es[i], params.N) % params.N
        assert prod == expected


def test_encode_threshold_and_hardening(pda_system):
    system, _ = pda_system
    params = system.params
    ids = sorted(system.enc_keys)
    with pytest.raises(GroupBelowThreshold):
        pda.encode_value(params, system.enc_keys[ids[0]], ids[:2], 1, 0, 5)
    hardened = pda.PdaEncKey(
        id=ids[0],
        evaluations=dict(system.enc_keys[ids[0]].evaluations),
        hardened_k=2,
    )
    # degree 2 keys (group of 3) are refused once hardened with k=2
    with pytest.raises(GroupBelowThreshold):
        pda.encode_value(params, hardened, ids[:3], 1, 0, 5)
    # group of 4 -> degree 3 > k: accepted
    pda.encode_value(params, hardened, ids[:4], 1, 0, 5)


def test_encode_ordinary_requires_membership(pda_system):
    system, _ = pda_system
    query = _query(system)
    outsider = pda.PdaEncKey(id=99, evaluations={5: 1})
    with pytest.raises(KeyMissing):
        pda.encode_ordinary(system.params, outsider, query, [1, 1])


# ---------------------------------------------------------------------------
# user-1 blinding and aggregation
# ---------------------------------------------------------------------------

def test_blinding_units_product_one(pda_system):
    system, _ = pda_system
    pk = system.agg_pk
    assert pda.blinding_units(pk, 1, Rng("b1")) == [1]
    units = pda.blinding_units(pk, 5, Rng("b5"))
    prod = 1
    for u in units:
        prod = prod * u % pk.nsq
    assert prod == 1


def test_blinded_and_unblinded_aggregate_identically(pda_system):
    system, _ = pda_system
    params = system.params
    query = _query(system, start=5000)
    rnd = random.Random(8)
    data = {i: [rnd.randrange(params.N) for _ in range(query.m)] for i in query.participants}
    u1, u2 = query.special_users()
    weights = pda.lagrange_weights(sorted(query.participants)).reduced(params.N_tilde)
    others = {
        i: pda.encode_ordinary(params, system.enc_keys[i], query, data[i], weights=weights)
        for i in query.participants
        if i not in (u1, u2)
    }
    own = pda.encode_ordinary(params, system.enc_keys[u1], query, data[u1], weights=weights)
    cts = pda.encode_user2(
        params, system.agg_pk, system.enc_keys[u2], query, data[u2], Rng("u2"), weights=weights
    )
    blinded = pda.encode_user1(params, system.agg_pk, query, own, others, cts, Rng("u1"))

    # unblinded: same construction with K_k = 1
    pk = system.agg_pk
    unblinded = []
    for k in range(query.m):
        exp = own[k]
        for i in others:
            exp = exp * others[i][k] % params.N
        v = paillier.scale(pk, cts[k], exp)
        unblinded.append(paillier.scale(pk, v, query.coeffs[k] % params.N))

    assert pda.aggregate(params, system.agg_keys, blinded) == pda.aggregate(
        params, system.agg_keys, unblinded
    )
    oracle = pda.evaluate_query(query, data, params.N)
    assert pda.aggregate(params, system.agg_keys, blinded) == oracle


def test_single_blinded_term_hides_term_value(pda_system):
    # one blinded ciphertext decrypts to something other than c_k * y_k
    system, _ = pda_system
    params = system.params
    rnd = random.Random(9)
    hits = 0
    trials = 500
    for trial in range(trials):
        query = _query(system, start=6000 + 2 * trial)
        data = {
            i: [rnd.randrange(params.N) for _ in range(query.m)]
            for i in query.participants
        }
        u1, u2 = query.special_users()
        weights = pda.lagrange_weights(sorted(query.participants)).reduced(params.N_tilde)
        others = {
            i: pda.encode_ordinary(params, system.enc_keys[i], query, data[i], weights=weights)
            for i in query.participants
            if i not in (u1, u2)
        }
        own = pda.encode_ordinary(params, system.enc_keys[u1], query, data[u1], weights=weights)
        cts = pda.encode_user2(
            params, system.agg_pk, system.enc_keys[u2], query, data[u2],
            Rng(f"u2:{trial}"), weights=weights,
        )
        blinded = pda.encode_user1(
            params, system.agg_pk, query, own, others, cts, Rng(f"u1:{trial}")
        )
        term0 = 1
        for i in query.participants:
            term0 = term0 * pow(data[i][0], query.exponent(i, 0), params.N) % params.N
        value = paillier.decrypt(system.agg_keys, blinded[0]) % params.N
        if value == term0:
            hits += 1
    assert hits <= 5  # negligible frequency at toy sizes


def test_user1_missing_encoding(pda_system):
    system, _ = pda_system
    query = _query(system)
    with pytest.raises(MissingEncoding):
        pda.encode_user1(
            system.params, system.agg_pk, query, {0: 1, 1: 1}, {}, {0: 1, 1: 1}, Rng("x")
        )


def test_aggregate_constant_and_zero_polynomials(pda_system):
    system, _ = pda_system
    params = system.params
    ids = tuple(sorted(system.enc_keys))
    # all inputs 1, coefficients c -> sum(c); zero coefficients -> 0
    for coeffs, expected in [((3, 9, 2), 14), ((0, 0), 0)]:
        query = pda.PdaQuery(
            coeffs=coeffs,
            exponents={},
            participants=ids,
            window=pda.Window(7000 + 10 * len(coeffs), len(coeffs)),
        )
        data = {i: [1] * len(coeffs) for i in ids}
        value, _ = netsim.run_pda_aggregation(system, query, data, seed=1)
        assert value == expected % params.N


# ---------------------------------------------------------------------------
# windows and registry
# ---------------------------------------------------------------------------

def test_window_overlap_cases():
    w = pda.Window(10, 5)  # [10, 15)
    assert w.overlaps(pda.Window(10, 5))
    assert w.overlaps(pda.Window(12, 1))
    assert w.overlaps(pda.Window(14, 10))
    assert w.overlaps(pda.Window(5, 6))
    assert not w.overlaps(pda.Window(15, 5))
    assert not w.overlaps(pda.Window(5, 5))


def test_registry_claim_and_reject(tmp_path):
    path = tmp_path / "registry.jsonl"
    reg = pda.SlotRegistry(path=path)
    reg.claim(pda.Window(0, 4))
    with pytest.raises(SlotReused):
        reg.claim(pda.Window(3, 2))
    reg.claim(pda.Window(4, 2))
    # a fresh registry seeded from the file still vetoes
    again = pda.SlotRegistry.load(path)
    assert len(again.windows) == 2
    with pytest.raises(SlotReused):
        again.claim(pda.Window(1, 1))


def test_rejected_window_emits_no_messages(pda_system):
    system, _ = pda_system
    registry = pda.SlotRegistry()
    query = _query(system, start=100)
    data = {i: [1, 1] for i in query.participants}
    netsim.run_pda_aggregation(system, query, data, seed=2, registry=registry)
    clash = _query(system, start=101)
    before = len(registry.windows)
    with pytest.raises(SlotReused):
        netsim.run_pda_aggregation(system, clash, data, seed=3, registry=registry)
    assert len(registry.windows) == before


def test_query_json_roundtrip(pda_system):
    system, _ = pda_system
    query = _query(system)
    doc = json.loads(json.dumps(query.to_json()))
    assert pda.PdaQuery.from_json(doc) == query


def test_special_user_override(pda_system):
    system, _ = pda_system
    params = system.params
    ids = tuple(sorted(system.enc_keys))
    rnd = random.Random(77)
    query = pda.PdaQuery(
        coeffs=(2, 1),
        exponents={ids[0]: {0: 1}, ids[1]: {1: 2}},
        participants=ids,
        window=pda.Window(40_000, 2),
        special=(ids[-1], ids[-2]),  # highest two instead of lowest two
    )
    assert query.special_users() == (ids[-1], ids[-2])
    data = {i: [rnd.randrange(params.N) for _ in range(2)] for i in ids}
    value, result = netsim.run_pda_aggregation(
        system, query, data, seed=6, registry=pda.SlotRegistry()
    )
    assert value == pda.evaluate_query(query, data, params.N)
    senders_last = {m.sender for m in result.bus.rounds[-1]}
    assert senders_last == {ids[-1]}  # the overridden user 1 publishes the terms


def test_round_structure(pda_system):
    system, _ = pda_system
    query = _query(system, start=9000)
    data = {i: [2, 3] for i in query.participants}
    _, result = netsim.run_pda_aggregation(system, query, data, seed=5)
    assert result.round_count == 3  # declaration + two broadcast rounds
    kinds0 = {m.kind for m in result.bus.rounds[0]}
    assert kinds0 == {"declare"}
    kinds1 = {m.kind for m in result.bus.rounds[1]}
    assert kinds1 == {"encode", "encode-enc"}
    kinds2 = {m.kind for m in result.bus.rounds[2]}
    assert kinds2 == {"blinded-term"}
