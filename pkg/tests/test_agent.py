import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clearnav.agent import (
    STOP,
    Candidate,
    Decoder,
    Episode,
    NavConfig,
    NavItem,
    Rollout,
    a2c_update,
    build_navigator,
    decoder_step,
    discounted_returns,
    evaluate,
    il_loss,
    nav_loss,
    shaped_reward,
    teacher_action,
    train_nav,
    view_features,
    view_orientations,
)
from clearnav.agent.model import ORIENT_DIM
from clearnav.encoders import VisEncoder
from clearnav.instrgen import generate_instructions
from clearnav.numerics import (
    ParamStore,
    ShapeError,
    Tensor,
    backward,
    grad_check,
    log_softmax,
    no_grad,
)
from clearnav.worldgen import NUM_CLASSES, NUM_VIEWS, EnvGraph, FrameStep, Path, WorldSpec, generate_environment, sample_path

SMALL = WorldSpec(feature_dim=8, num_nodes=10)


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def graph(positions, edges, spec=SMALL) -> EnvGraph:
    pos = np.asarray(positions, dtype=np.float64)
    inv = np.zeros((len(pos), NUM_VIEWS, NUM_CLASSES), dtype=bool)
    return EnvGraph("g", "train-seen", pos, edges, inv, np.zeros(spec.feature_dim), spec, 0)


def line(n=6, spacing=1.0):
    return graph([[i * spacing, 0, 0] for i in range(n)], [(i, i + 1) for i in range(n - 1)])


def episode(env, nodes, **kw):
    path = Path("g_p0", env.env_id, list(nodes), 0.0, tuple(FrameStep("forward", None) for _ in nodes))
    return Episode(env, path, (1, 5, 2), "L1", **kw)


def move(ep, node):
    return ep.step(next(c for c in ep.candidates() if c.node == node))


def stop(ep):
    return ep.step(ep.candidates()[0])


@pytest.fixture(scope="module")
def world():
    envs = {f"a{k}": generate_environment(k, SMALL, env_id=f"a{k}") for k in range(2)}
    items = []
    for eid, env in envs.items():
        for i in range(6):
            p = sample_path(env, 3 + i % 3, i, path_id=f"{eid}_p{i}")
            items.append(NavItem(p, generate_instructions(p, 0)[i % 9]))
    return envs, items


def tiny_cfg(**kw):
    base = NavConfig(iterations=3, batch_size=4, hidden=8, action_dim=6, text_dim=8, lang_layers=1, seed=1)
    return replace(base, **kw)


# ---------------------------------------------------------------- view features

def test_orientation_examples():
    o = view_orientations(0.0)
    assert o.shape == (NUM_VIEWS, ORIENT_DIM)
    np.testing.assert_allclose(o[12], [1.0, 0.0, 1.0, 0.0], atol=1e-15)   # theta 0, phi 0
    assert (np.linalg.norm(o, axis=1) <= math.sqrt(2) + 1e-12).all()
    assert view_orientations(np.zeros(3)).shape == (3, NUM_VIEWS, ORIENT_DIM)


def test_view_features_shape_and_suffix(rng):
    vis = VisEncoder(ParamStore(0), dim=8)
    f, v_hat = view_features(rng.standard_normal((NUM_VIEWS, 8)), vis)
    assert f.shape == (NUM_VIEWS, 12)
    np.testing.assert_array_equal(f.data[:, :8], v_hat.data)
    np.testing.assert_array_equal(f.data[:, 8:], view_orientations(0.0))
    with pytest.raises(ShapeError):
        view_features(np.zeros((35, 8)), vis)


# ---------------------------------------------------------------- decoder

def _decoder_inputs(rng, B=2, K=3, T=4, d=6, t=5):
    f = Tensor(rng.standard_normal((B, NUM_VIEWS, d)))
    tokens = Tensor(rng.standard_normal((B, T, t)))
    tmask = np.ones((B, T), dtype=bool)
    tmask[1, -1] = False
    g = Tensor(rng.standard_normal((B, K, d)))
    cmask = np.ones((B, K), dtype=bool)
    cmask[0, -1] = False
    return f, tokens, tmask, g, cmask


def test_identical_candidates_uniform(rng):
    dec = Decoder(ParamStore(0), 6, 5, hidden=7, action_dim=3)
    f, tokens, tmask, _, _ = _decoder_inputs(rng)
    g = Tensor(np.tile(rng.standard_normal(6), (2, 4, 1)))
    out = dec.step(dec.init_state(2), f, tokens, tmask, g, np.ones((2, 4), dtype=bool))
    np.testing.assert_allclose(_softmax(out.logits.data), 0.25, atol=1e-12)


def test_rho_is_distribution_over_valid_tokens(rng):
    dec = Decoder(ParamStore(0), 6, 5, hidden=7, action_dim=3)
    f, tokens, tmask, g, cmask = _decoder_inputs(rng)
    _, _, rho = decoder_step(dec, dec.init_state(2), f, tokens, tmask, g, cmask)
    np.testing.assert_allclose(rho.data.sum(axis=1), 1.0, atol=1e-12)
    assert rho.data[1, -1] == 0.0


def test_decoder_matches_equation_oracle(rng):
    dec = Decoder(ParamStore(4), 6, 5, hidden=7, action_dim=3)
    for t in dec.params():
        t.data[:] = rng.standard_normal(t.shape) * 0.5
    f, tokens, tmask, g, cmask = _decoder_inputs(rng)
    state = dec.init_state(2)
    state.h_hat.data[:] = rng.standard_normal((2, 7))
    state.c.data[:] = rng.standard_normal((2, 7))
    state.a_prev = rng.standard_normal((2, 4))
    out = dec.step(state, f, tokens, tmask, g, cmask)

    P = {k.split(".", 1)[1]: v.data for k, v in dec.store.items()}
    H = 7
    for b in range(2):
        hh, c = state.h_hat.data[b], state.c.data[b]
        fb = f.data[b]
        gamma = _softmax(fb @ (P["w_f"] @ hh))
        f_hat = gamma @ fb
        a = np.tanh(P["w_act"] @ state.a_prev[b] + P["b_act"])
        x = np.concatenate([f_hat, a])
        z = P["lstm.w_ih"] @ x + P["lstm.b"] + P["lstm.w_hh"] @ hh
        i, fg, gg, o = _sig(z[:H]), _sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), _sig(z[3 * H:])
        c_new = fg * c + i * gg
        h = o * np.tanh(c_new)
        valid = tmask[b]
        wb = tokens.data[b][valid]
        rho = _softmax(wb @ (P["w_l"] @ h))
        u = rho @ wb
        h_hat = np.tanh(P["w_m"] @ np.concatenate([u, h]))
        logits = g.data[b] @ (P["w_a"] @ h_hat)
        value = P["w_v"] @ h_hat + P["b_v"]
        np.testing.assert_allclose(out.gamma.data[b], gamma, atol=1e-10)
        np.testing.assert_allclose(out.state.h.data[b], h, atol=1e-10)
        np.testing.assert_allclose(out.state.c.data[b], c_new, atol=1e-10)
        np.testing.assert_allclose(out.rho.data[b][valid], rho, atol=1e-10)
        np.testing.assert_allclose(out.state.h_hat.data[b], h_hat, atol=1e-10)
        K = cmask[b].sum()
        np.testing.assert_allclose(out.logits.data[b][:K], logits[:K], atol=1e-10)
        assert (out.logits.data[b][K:] <= -1e8).all()
        np.testing.assert_allclose(out.value.data[b], value[0], atol=1e-10)


def test_decoder_errors(rng):
    dec = Decoder(ParamStore(0), 6, 5, hidden=7, action_dim=3)
    f, tokens, tmask, g, cmask = _decoder_inputs(rng)
    with pytest.raises(ShapeError):
        dec.step(dec.init_state(2), f, tokens, tmask, Tensor(np.zeros((2, 0, 6))), np.zeros((2, 0), dtype=bool))
    with pytest.raises(ShapeError):
        dec.step(dec.init_state(2), f, tokens, tmask, g, np.zeros_like(cmask))


def test_decoder_step_gradients(rng):
    for seed in range(4):
        r = np.random.default_rng(seed)
        dec = Decoder(ParamStore(seed), 6, 5, hidden=4, action_dim=3)
        f, tokens, tmask, g, cmask = _decoder_inputs(r)
        for t in (f, tokens, g):
            t.requires_grad = True
        wl, wv, wr = r.standard_normal((2, 3)), r.standard_normal(2), r.standard_normal((2, 4))

        def loss():
            o = dec.step(dec.init_state(2), f, tokens, tmask, g, cmask)
            lp = log_softmax(o.logits, axis=-1)
            return (lp * (wl * cmask)).sum() + (o.value * wv).sum() + (o.rho * wr).sum()

        assert grad_check(loss, dec.params() + [f, tokens, g], max_entries=15) < 1e-4


# ---------------------------------------------------------------- teacher

def y_graph():
    #        3
    #        |
    # 0 - 1 - 2 - 4
    #     |       |
    #     5 - 6 - 7
    pos = [[0, 0, 0], [2, 0, 0], [4, 0, 0], [4, 2.5, 0], [6, 0, 0], [2, -2, 0], [4, -2.2, 0], [6, -2, 0]]
    return graph(pos, [(0, 1), (1, 2), (2, 3), (2, 4), (1, 5), (5, 6), (6, 7), (4, 7)])


def floyd(env):
    n = env.num_nodes
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for a, b in env.edges:
        d[a, b] = d[b, a] = env.edge_length(a, b)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def test_teacher_on_path_and_stop():
    env = y_graph()
    ep = episode(env, [0, 1, 2, 4])
    for nxt in (1, 2, 4):
        assert ep.candidates()[teacher_action(ep)].node == nxt
        move(ep, nxt)
    assert teacher_action(ep) == 0


def test_teacher_off_path_matches_brute_force():
    env = y_graph()
    d = floyd(env)
    gt = [0, 1, 2, 4]
    for detour in ([1, 5], [1, 5, 6], [1, 2, 3], [1, 5, 6, 7], [1, 2, 3, 2, 1]):
        ep = episode(env, gt)
        nxt_idx = 1
        for node in detour:
            move(ep, node)
            if nxt_idx < len(gt) and node == gt[nxt_idx]:
                nxt_idx += 1
        target = gt[nxt_idx]
        nbrs = [c.node for c in ep.candidates()[1:]]
        want = min(nbrs, key=lambda w: (round(d[w, target], 12), w))
        assert ep.candidates()[teacher_action(ep)].node == want


def test_teacher_requires_active_episode():
    ep = episode(line(), [0, 1])
    stop(ep)
    with pytest.raises(RuntimeError):
        teacher_action(ep)


def test_teacher_forcing_reproduces_path(world):
    envs, items = world
    from clearnav.metrics import score_episode
    for it in items:
        ep = it.episode(envs)
        while not ep.done:
            ep.step(ep.candidates()[ep.teacher()])
        assert ep.stopped and ep.trajectory == it.path.nodes
        r = score_episode(ep.env, it.path.nodes, ep.trajectory, path_id="x", language="L1", split="s")
        assert r.SR == 1 and r.NDTW == 1.0


# ---------------------------------------------------------------- episode and rewards

def test_stop_rewards():
    ep = episode(line(), [0, 1, 2])
    move(ep, 1)
    move(ep, 2)
    assert stop(ep) == 3.0
    assert shaped_reward(ep, 2) == 3.0
    far = episode(line(spacing=2.0), [0, 1, 2, 3])
    assert stop(far) == -3.0


def test_straight_line_rewards():
    ep = episode(line(), [0, 1, 2, 3, 4])
    for n in (1, 2, 3, 4):
        r = move(ep, n)
        assert r >= 1.0          # r_dist = +1 and r_ndtw >= 0


def test_back_and_forth_telescopes():
    ep = episode(line(), [0, 1, 2, 3, 4])
    for n in (1, 0, 1, 0):
        move(ep, n)
    # nDTW deltas telescope too, so the sum is the net change of both terms
    assert ep.steps == 4
    d = [ep.env.geodesic_matrix()[n, 4] for n in [0, 1, 0, 1, 0]]
    r_dist = sum(np.sign(a - b) for a, b in zip(d, d[1:]))
    assert r_dist == 0
    from clearnav.metrics import ndtw
    start = ndtw([0], ep.path.nodes, ep.env)
    assert sum(ep.rewards) == pytest.approx(r_dist + ndtw(ep.trajectory, ep.path.nodes, ep.env) - start, abs=1e-12)


@given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=12))
def test_r_dist_counts_closer_minus_farther(moves):
    env = line(14)
    ep = episode(env, [6, 7, 8, 9, 10, 11, 12, 13], horizon=100, ndtw_reward_clip=True)
    ep.node = 6
    closer = farther = 0
    for m in moves:
        nxt = ep.node + m
        if not 0 <= nxt < 14:
            continue
        before = ep.distance_to_goal()
        r = move(ep, nxt)
        assert r >= (1 if ep.distance_to_goal() < before else -1)   # clipped nDTW term >= 0
        closer += ep.distance_to_goal() < before
        farther += ep.distance_to_goal() > before
    # with clipping the nDTW term is non-negative, so rewards bound the count from above
    assert sum(ep.rewards) >= closer - farther


def test_episode_guards():
    ep = episode(line(), [0, 1, 2], horizon=2)
    with pytest.raises(ValueError):
        ep.step(Candidate(4, 0, 0.0, 0.0))
    move(ep, 1)
    move(ep, 0)
    assert ep.done and not ep.stopped and ep.steps == 2
    with pytest.raises(RuntimeError):
        stop(ep)
    assert episode(line(), [0, 1, 2]).horizon == 10
    assert Candidate(STOP, 36, 1.0, 1.0).orient.tolist() == [0.0] * 4


# ---------------------------------------------------------------- returns and losses

def test_returns_examples_and_oracle():
    assert discounted_returns([0.0, 0.0, 0.0], 0.9).tolist() == [0.0, 0.0, 0.0]
    assert discounted_returns([1.0], 0.3).tolist() == [1.0]
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = rng.standard_normal(rng.integers(1, 12))
        g = rng.uniform(0, 1)
        want = [sum(g ** k * r[t + k] for k in range(len(r) - t)) for t in range(len(r))]
        np.testing.assert_allclose(discounted_returns(r, g), want, atol=1e-12)


def _manual_rollout(logits_per_step, actions, active, values, rewards):
    """Hand-built rollout over finished dummy episodes with given rewards."""
    eps = []
    for b, rs in enumerate(rewards):
        ep = episode(line(), [0, 1])
        ep.rewards = list(rs)
        ep.done = True
        eps.append(ep)
    ro = Rollout(eps)
    for t, lg in enumerate(logits_per_step):
        lg = Tensor(np.asarray(lg, dtype=np.float64), requires_grad=True)
        lp = log_softmax(lg, axis=-1)
        ro.logp.append(lp[np.arange(len(actions[t])), np.asarray(actions[t])])
        ro.values.append(Tensor(np.asarray(values[t], dtype=np.float64), requires_grad=True))
        p = np.exp(lp.data)
        ro.entropy.append(Tensor(-(p * lp.data).sum(axis=-1)))
        ro.active.append(np.asarray(active[t], dtype=bool))
    return ro


def test_il_uniform_closed_form():
    K, T_ = 4, 3
    ro = _manual_rollout([np.zeros((1, K))] * T_, [[0]] * T_, [[True]] * T_, [[0.0]] * T_, [[0.0] * T_])
    assert il_loss(ro).item() == pytest.approx(T_ * math.log(K), abs=1e-12)


def test_il_one_hot_limit():
    lg = np.full((1, 5), -30.0)
    lg[0, 2] = 30.0
    ro = _manual_rollout([lg] * 4, [[2]] * 4, [[True]] * 4, [[0.0]] * 4, [[0.0] * 4])
    assert il_loss(ro).item() < 1e-6


def test_il_through_navigator_uniform(world):
    envs, items = world
    nav = build_navigator(tiny_cfg(), 8)
    nav.decoder.w_a.data[:] = 0.0
    eps = [it.episode(envs) for it in items[:4]]
    text = nav.lang.encode([e.tokens for e in eps])
    ro = nav.rollout(eps, text, "teacher", record=True)
    want = sum(math.log(len(r["probs"])) for e in eps for r in e.records) / len(eps)
    assert il_loss(ro).item() == pytest.approx(want, abs=1e-10)


def test_a2c_matches_manual_computation():
    rewards = [[1.0, -1.0, 3.0], [0.5, 2.0]]
    gamma = 0.9
    values = [[0.2, -0.1], [0.0, 0.3], [0.4, 0.0]]
    active = [[True, True], [True, True], [True, False]]
    logits = [np.array([[0.1, 0.5, -0.2], [1.0, 0.0, 0.0]])] * 3
    actions = [[1, 0], [2, 1], [0, 0]]
    ro = _manual_rollout(logits, actions, active, values, rewards)
    loss, stats = a2c_update(ro, gamma, 0.5, 0.01)
    R = [discounted_returns(r, gamma) for r in rewards]
    pol = val = ent = 0.0
    for t in range(3):
        for b in range(2):
            if not active[t][b]:
                continue
            lp = logits[t][b] - np.log(np.exp(logits[t][b]).sum())
            adv = R[b][t] - values[t][b]
            pol += -lp[actions[t][b]] * adv
            val += 0.5 * adv ** 2
            ent += -(np.exp(lp) * lp).sum()
    n = 5
    assert loss.item() == pytest.approx((pol + 0.5 * val - 0.01 * ent) / n, rel=1e-12)
    assert stats["policy"] == pytest.approx(pol / n, rel=1e-12)


def test_a2c_zero_rewards_zero_targets():
    ro = _manual_rollout([np.zeros((1, 2))] * 2, [[0]] * 2, [[True]] * 2, [[0.0]] * 2, [[0.0, 0.0]])
    loss, stats = a2c_update(ro, 0.9, 0.5, 0.0)
    assert loss.item() == 0.0 and stats["value"] == 0.0


def test_a2c_errors():
    with pytest.raises(ValueError):
        a2c_update(Rollout([]))
    ro = _manual_rollout([np.zeros((1, 2))], [[0]], [[True]], [[0.0]], [[0.0]])
    ro.episodes[0].done = False
    with pytest.raises(ValueError):
        a2c_update(ro)


def test_il_and_a2c_gradients_through_model(world):
    envs, items = world
    nav = build_navigator(tiny_cfg(hidden=4, action_dim=3, text_dim=4), 8)
    params = nav.decoder.params() + nav.vis.params()[:2] + nav.lang.params()[:2]

    def il():
        eps = [it.episode(envs) for it in items[:2]]
        return il_loss(nav.rollout(eps, nav.lang.encode([e.tokens for e in eps]), "teacher"))

    def rl():
        eps = [it.episode(envs) for it in items[:2]]
        return a2c_update(nav.rollout(eps, nav.lang.encode([e.tokens for e in eps]), "teacher"), 0.9, 0.5, 0.01)[0]

    assert grad_check(il, params, max_entries=6) < 1e-4
    # the advantage is detached; with a zero value head it is constant, so
    # finite differences see the same function as the tape
    nav.decoder.w_v.data[:] = 0.0
    nav.decoder.b_v.data[:] = 0.0
    no_head = [p for p in params if p is not nav.decoder.w_v and p is not nav.decoder.b_v]
    assert grad_check(rl, no_head, max_entries=6) < 1e-4

    # value head on its own: hold the policy term's log-probs fixed
    nav.decoder.w_v.data[:] = np.random.default_rng(3).standard_normal(nav.decoder.w_v.shape)

    def value_only():
        eps = [it.episode(envs) for it in items[:2]]
        ro = nav.rollout(eps, nav.lang.encode([e.tokens for e in eps]), "teacher")
        ro.logp = [Tensor(np.zeros_like(lp.data)) for lp in ro.logp]
        return a2c_update(ro, 0.9, 0.5, 0.0)[0]

    assert grad_check(value_only, [nav.decoder.w_v, nav.decoder.b_v]) < 1e-4


def test_a2c_gradient_treats_advantage_as_constant():
    rewards = [[1.0, 2.0]]
    ro = _manual_rollout([np.array([[0.3, -0.4]])] * 2, [[0], [1]], [[True]] * 2, [[0.5], [-0.2]], rewards)
    values = ro.values
    loss, _ = a2c_update(ro, 0.9, 0.5, 0.0)
    backward(loss)
    R = discounted_returns(rewards[0], 0.9)
    for t, v in enumerate(values):
        # d/dV of 0.5 * 0.5 * (V - R)^2 / n, with no contribution from the policy term
        assert v.grad[0] == pytest.approx(0.5 * (v.data[0] - R[t]) / 2, rel=1e-12)


def test_nav_loss_composition():
    a, b = Tensor(np.array(2.0)), Tensor(np.array(5.0))
    assert nav_loss(a, b, 1.0, 0.0).item() == 2.0
    assert nav_loss(a, b, 1.0, 0.4).item() == pytest.approx(2.0 + 0.4 * 5.0)
    big = nav_loss(a, b, 1.0, 1e6).item()
    assert big / 1e6 == pytest.approx(5.0, rel=1e-6)
    assert nav_loss(None, b, 1.0, 0.4).item() == pytest.approx(2.0)
    assert nav_loss(a, b, 0.0, 0.0) is None


# ---------------------------------------------------------------- training

def test_gradients_reach_every_parameter(world):
    envs, items = world
    nav = build_navigator(tiny_cfg(), 8)
    eps = [it.episode(envs) for it in items[:4]]
    text = nav.lang.encode([e.tokens for e in eps])
    l_il = il_loss(nav.rollout(eps, text, "teacher"))
    eps2 = [it.episode(envs) for it in items[:4]]
    l_rl, _ = a2c_update(nav.rollout(eps2, text, "sample", np.random.default_rng(0)))
    store = nav.decoder.store
    store.zero_grad()
    backward(nav_loss(l_rl, l_il, 1.0, 0.4))
    dead = [n for n, t in store.items() if t.grad is None or not np.any(t.grad)]
    assert dead == []


def test_training_is_deterministic(world, tmp_path):
    envs, items = world
    _, h1 = train_nav(tiny_cfg(), items, envs, log_path=tmp_path / "a.jsonl")
    _, h2 = train_nav(tiny_cfg(), items, envs)
    strip = lambda h: [{k: v for k, v in r.items() if k != "seconds"} for r in h]  # noqa: E731
    assert strip(h1) == strip(h2)
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert len(lines) == 4
    head = json.loads(lines[0])
    assert (head["schema_version"], head["kind"]) == (1, "nav-log")
    assert [json.loads(x)["iter"] for x in lines[1:]] == [0, 1, 2]


def test_train_rejects_bad_inputs(world):
    envs, items = world
    with pytest.raises(ValueError):
        train_nav(tiny_cfg(), [], envs)
    with pytest.raises(ValueError):
        train_nav(tiny_cfg(il_weight=0.0, rl_weight=0.0), items, envs)
    with pytest.raises(KeyError):
        train_nav(tiny_cfg(), items, envs, init={"lang.bogus": np.zeros(3)})


def test_init_weights_are_loaded(world):
    envs, items = world
    nav0 = build_navigator(tiny_cfg(seed=9), 8)
    init = {n: t.data.copy() for n, t in nav0.decoder.store.items() if n.startswith(("lang.", "vis."))}
    nav, _ = train_nav(tiny_cfg(iterations=0), items, envs, init=init)
    for n, v in init.items():
        np.testing.assert_array_equal(nav.decoder.store[n].data, v)


def test_greedy_evaluation_is_proper_distribution(world):
    envs, items = world
    nav = build_navigator(tiny_cfg(), 8)
    results, eps = evaluate(nav, items, envs, batch_size=5, record=True)
    assert len(results) == len(items)
    for e in eps:
        assert e.done and e.steps <= e.horizon
        for r in e.records:
            assert sum(r["probs"]) == pytest.approx(1.0, abs=1e-9)
            assert r["action"] == int(np.argmax(r["probs"]))
        for a in e.attention:
            assert a.sum() == pytest.approx(1.0, abs=1e-9)


def test_rollout_mode_validation(world):
    envs, items = world
    nav = build_navigator(tiny_cfg(), 8)
    eps = [items[0].episode(envs)]
    text = nav.lang.encode([eps[0].tokens])
    with pytest.raises(ValueError):
        nav.rollout(eps, text, "beam")
    with pytest.raises(ValueError):
        nav.rollout(eps, text, "sample")
