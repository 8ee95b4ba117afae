"""Independent brute-force reference implementations used only by tests.

These deliberately duplicate arithmetic instead of importing it from the
package, so every check here is a genuine second opinion: a forward-sum
TD(lambda) expansion, central finite differences, a plain-numpy attention
pipeline, and scripted-episode builders for the posthumous-credit path.
"""

from __future__ import annotations

import numpy as np

from mapoca.policy import ActionRecord
from mapoca.trainer import GroupStep, GroupTrajectory


def td_lambda_forward(rewards, bootstrap_values, done, gamma, lam):
    """Directly evaluate the truncated forward sum of weighted n-step returns.

    The final term absorbs the remaining geometric mass, so the result is
    exact on finite segments for every lambda in [0, 1].
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(bootstrap_values, dtype=float).copy()
    if done:
        v[-1] = 0.0
    horizon = len(r)
    targets = np.zeros(horizon)
    for t in range(horizon):
        remaining = horizon - t
        total = 0.0
        for n in range(1, remaining + 1):
            n_step = sum(gamma ** (l - 1) * r[t + l - 1] for l in range(1, n + 1))
            n_step += gamma ** n * v[t + n - 1]
            weight = lam ** (n - 1) if n == remaining else (1 - lam) * lam ** (n - 1)
            total += weight * n_step
        targets[t] = total
    return targets


def finite_diff(f, param, flat_index, h=1e-5):
    """Central finite difference of scalar f() along one parameter entry."""
    original = float(param.value.flat[flat_index])
    param.value.flat[flat_index] = original + h
    up = f()
    param.value.flat[flat_index] = original - h
    down = f()
    param.value.flat[flat_index] = original
    return (up - down) / (2.0 * h)


def max_grad_rel_error(build_loss, params, rng, n_probes=100, h=1e-5):
    """Worst relative disagreement between backward() and finite differences."""
    import mapoca.tensorcore as tc

    for p in params:
        p.zero_grad()
    tc.backward(build_loss())
    analytic = [p.grad.copy() for p in params]

    def value() -> float:
        return float(build_loss().value)

    worst = 0.0
    for _ in range(n_probes):
        pi = int(rng.integers(len(params)))
        idx = int(rng.integers(params[pi].value.size))
        numeric = finite_diff(value, params[pi], idx, h)
        a = analytic[pi].flat[idx]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-5)
        worst = max(worst, err)
    return worst


def reference_rsa(entities, block):
    """Plain-numpy recomputation of an RsaBlock forward pass from its weights."""
    eps = 1e-5

    def layer_norm(x, gain, shift):
        mu = x.mean(-1, keepdims=True)
        var = ((x - mu) ** 2).mean(-1, keepdims=True)
        return (x - mu) / np.sqrt(var + eps) * gain + shift

    x = np.asarray(entities, dtype=float)
    k, d = x.shape
    heads = block.n_heads
    dh = d // heads
    normed = layer_norm(x, block.norm_in_gain.value, block.norm_in_shift.value)
    q = normed @ block.query.weight.value + block.query.bias.value
    key = normed @ block.key.weight.value + block.key.bias.value
    v = normed @ block.value.weight.value + block.value.bias.value

    mixed = np.zeros((k, d))
    for head in range(heads):
        sl = slice(head * dh, (head + 1) * dh)
        logits = q[:, sl] @ key[:, sl].T / np.sqrt(dh)
        e = np.exp(logits - logits.max(-1, keepdims=True))
        weights = e / e.sum(-1, keepdims=True)
        mixed[:, sl] = weights @ v[:, sl]
    projected = mixed @ block.out.weight.value + block.out.bias.value
    out = layer_norm(
        projected + x, block.norm_out_gain.value, block.norm_out_shift.value
    )
    return out.mean(axis=0)


def monte_carlo_return(rewards, gamma):
    """Plain discounted sum of a reward list."""
    return sum(gamma ** i * r for i, r in enumerate(rewards))


def posthumous_trajectory(obs_dim=4, with_slots=False, n_max=2):
    """The canonical 3-step scripted episode: agent 0 acts only at t=0,
    the +1 group reward lands two steps after its death, and the episode
    terminates.  Rewards per step: 0, 0, 1.
    """
    rng = np.random.default_rng(7)
    obs = {
        (t, a): rng.normal(size=obs_dim) for t in range(3) for a in (0, 1)
    }

    def record(action):
        return ActionRecord(action=action, log_prob=-1.0, entropy=0.5)

    def slot_view(active_obs, slots):
        view = np.zeros((n_max, obs_dim))
        for agent, slot in slots.items():
            if agent in active_obs:
                view[slot] = active_obs[agent]
        return view

    slots = {0: 0, 1: 1}
    steps = [
        GroupStep(
            observations={0: obs[(0, 0)], 1: obs[(0, 1)]},
            actions={0: 1, 1: 0},
            records={0: record(1), 1: record(0)},
            reward=0.0,
            terminations=frozenset({0}),
            spawned=(),
            episode_done=False,
            slot_view=slot_view({0: obs[(0, 0)], 1: obs[(0, 1)]}, slots)
            if with_slots
            else None,
            slots={0: 0, 1: 1} if with_slots else None,
        ),
        GroupStep(
            observations={1: obs[(1, 1)]},
            actions={1: 2},
            records={1: record(2)},
            reward=0.0,
            terminations=frozenset(),
            spawned=(),
            episode_done=False,
            slot_view=slot_view({1: obs[(1, 1)]}, slots) if with_slots else None,
            slots={1: 1} if with_slots else None,
        ),
        GroupStep(
            observations={1: obs[(2, 1)]},
            actions={1: 0},
            records={1: record(0)},
            reward=1.0,
            terminations=frozenset({1}),
            spawned=(),
            episode_done=True,
            slot_view=slot_view({1: obs[(2, 1)]}, slots) if with_slots else None,
            slots={1: 1} if with_slots else None,
        ),
    ]
    return GroupTrajectory(steps=steps, final_observations={}, terminal=True)
