"""Supervised benchmark bidder: two independent regressors, no shared loss.

A price model maps (slot, weekday flag, reserve) to the realized clearing
price; a quantity model maps (slot, weekday flag, customer offers) to the
realized curtailment. Bidding passes both predictions straight through as
the bid, clipped to bounds. Any over-prediction of the clearing price loses
the slot outright, which is what keeps this benchmark's success rate low.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .environment import EnvState
from .neuralnet import AdamOptimizer, DenseNetwork
from .pipeline import Dataset, make_encoder

PRICE_TARGET = "mcp"
QUANTITY_TARGET = "q_act"


@dataclass
class BaselineModel:
    price_net: DenseNetwork
    quantity_net: DenseNetwork
    price_cap: float
    quantity_cap: float
    n_customers: int
    diagnostics: dict = field(default_factory=dict)


def _price_features(enc_rows: np.ndarray, n_customers: int) -> np.ndarray:
    # slot, weekday flag, reserve
    return enc_rows[:, [0, 2, 3 + n_customers]]


def _quantity_features(enc_rows: np.ndarray, n_customers: int) -> np.ndarray:
    # slot, weekday flag, offers
    return enc_rows[:, [0, 2] + list(range(3, 3 + n_customers))]


def training_matrices(cfg: RunConfig, rows: list[dict], dataset: Dataset):
    """Regression inputs and targets from an outcome log plus its dataset.

    The price target is every period's realized clearing price; the quantity
    target is the realized curtailment, which is only observable on won
    periods, so losing periods are dropped from the quantity set.
    """
    encoder = make_encoder(cfg)
    start = cfg.scenario.event.start_slot
    days = {d.index: d for d in dataset.days}
    enc_rows, mcp, keep_q, q_act = [], [], [], []
    for r in rows:
        day = days[r["day"]]
        n = r["slot"] - start
        state = EnvState(slot=r["slot"], day_of_year=day.day_of_year,
                         weekend=day.weekend, offers=day.plans[:, n],
                         reserve=r["reserve"])
        enc_rows.append(encoder.encode(state))
        mcp.append(r["mcp"])
        keep_q.append(bool(r["win"]))
        q_act.append(r["q_act"])
    enc_rows = np.asarray(enc_rows)
    mcp = np.asarray(mcp)
    q_act = np.asarray(q_act)
    keep_q = np.asarray(keep_q)
    n_cust = cfg.scenario.population.count
    x_price = _price_features(enc_rows, n_cust)
    x_qty = _quantity_features(enc_rows[keep_q], n_cust)
    return x_price, mcp, x_qty, q_act[keep_q]


def fit_regressor(
    x: np.ndarray,
    y: np.ndarray,
    hidden_sizes: list[int],
    rng: np.random.Generator,
    epochs: int = 200,
    batch_size: int = 64,
    learning_rate: float = 1e-3,
    target_scale: float = 1.0,
) -> tuple[DenseNetwork, dict]:
    """Mean-squared-error fit of a dense network; targets scaled to O(1)."""
    if len(x) == 0:
        raise ValueError("cannot fit a regressor on an empty training set")
    # near-zero final layer with the bias at the target mean: the fit starts
    # from the best constant predictor and learns the residual
    net = DenseNetwork([x.shape[1]] + list(hidden_sizes) + [1], rng=rng,
                       final_init_scale=1e-3)
    y_scaled = y / target_scale
    net.biases[-1][:] = float(np.mean(y_scaled))
    opt = AdamOptimizer(net, learning_rate=learning_rate)
    n = len(x)
    losses = []
    for epoch in range(epochs):
        # step decay: halve the rate over the last quarters for a tight fit
        opt.learning_rate = learning_rate * 0.5 ** int(4 * epoch / max(1, epochs))
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            pred = net.forward(x[idx])[:, 0]
            err = pred - y_scaled[idx]
            losses.append(float(np.mean(err * err)))
            grads, _ = net.backward((2.0 / len(idx)) * err[:, None])
            opt.step(net, grads)
    diagnostics = {
        "final_loss": losses[-1] if losses else float("nan"),
        "constant_target": bool(np.std(y) < 1e-12),
        "samples": int(n),
    }
    return net, diagnostics


def fit_baseline(
    cfg: RunConfig,
    rows: list[dict],
    dataset: Dataset,
    rng: np.random.Generator,
    epochs: int = 200,
) -> BaselineModel:
    """Train both regressors on an outcome log's realized prices and
    curtailments; hidden architectures mirror the corresponding agents."""
    x_price, y_price, x_qty, y_qty = training_matrices(cfg, rows, dataset)
    price_net, price_diag = fit_regressor(
        x_price, y_price, list(cfg.agents.for_role("price", "hidden_sizes")),
        rng, epochs=epochs, target_scale=cfg.scenario.price_cap,
    )
    qty_net, qty_diag = fit_regressor(
        x_qty, y_qty, list(cfg.agents.for_role("quantity", "hidden_sizes")),
        rng, epochs=epochs, target_scale=cfg.scenario.quantity_cap,
    )
    return BaselineModel(
        price_net=price_net,
        quantity_net=qty_net,
        price_cap=cfg.scenario.price_cap,
        quantity_cap=cfg.scenario.quantity_cap,
        n_customers=cfg.scenario.population.count,
        diagnostics={"price": price_diag, "quantity": qty_diag},
    )


def baseline_bid(model: BaselineModel, enc: np.ndarray) -> tuple[float, float]:
    """Bid the predicted clearing price and curtailment directly, clipped."""
    enc = np.atleast_2d(enc)
    price = float(model.price_net.predict(
        _price_features(enc, model.n_customers))[0, 0]) * model.price_cap
    quantity = float(model.quantity_net.predict(
        _quantity_features(enc, model.n_customers))[0, 0]) * model.quantity_cap
    return (
        float(np.clip(price, 0.0, model.price_cap)),
        float(np.clip(quantity, 0.0, model.quantity_cap)),
    )


def baseline_policy(model: BaselineModel):
    """Adapter so the benchmark runs through the same evaluation path as
    the agents."""
    def policy(enc):
        return baseline_bid(model, enc)
    return policy


def save_baseline(model: BaselineModel, directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model.price_net.save(directory / "baseline_price.ckpt")
    model.quantity_net.save(directory / "baseline_quantity.ckpt")


def load_baseline(cfg: RunConfig, directory) -> BaselineModel:
    from pathlib import Path

    directory = Path(directory)
    return BaselineModel(
        price_net=DenseNetwork.load(directory / "baseline_price.ckpt"),
        quantity_net=DenseNetwork.load(directory / "baseline_quantity.ckpt"),
        price_cap=cfg.scenario.price_cap,
        quantity_cap=cfg.scenario.quantity_cap,
        n_customers=cfg.scenario.population.count,
    )
