"""Training loop: alternating critic and generator-side updates.

One step runs the full pipeline: prior-based rough dehaze feeds the
generator; the shared encoder and attention head estimate airlight from the
dark channel and the hazy input; the transmission network closes the
scattering model so the re-hazed output can be compared to the input. The
non-aligned reference enters only through the multi-scale reference loss.

Everything random is a pure function of (config, seed, step), so training
is reproducible and checkpoints resume bit-exactly.
"""

import os

import numpy as np
import torch
from dataclasses import dataclass, field

from .. import losses as L
from ..data import epoch_order, prepare_pair
from ..errors import ArgumentError, NumericalError
from ..networks import (
    Discriminator,
    ModelBundle,
    build_models,
    load_bundle,
    load_feature_extractor,
    save_bundle,
    shared_encode,
)
from ..physics import DcpConfig, dark_channel, dcp_dehaze
from ..torchops import scale_levels, to_tensor
from .config import TrainConfig, load_config, lr_factor, save_config

STATE_FILE = "state.json"
MODEL_DIR = "model"
OPTIM_DIR = "optim"


@dataclass
class TrainState:
    config: TrainConfig
    bundle: ModelBundle
    opt_gen: torch.optim.Adam
    opt_disc: torch.optim.Adam
    extractor: torch.nn.Module
    step: int = 0
    history: list = field(default_factory=list)


def _set_requires_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)


def init_state(cfg, extractor=None):
    bundle = build_models(cfg.network)
    opt_gen = torch.optim.Adam(
        list(bundle.generator_side_parameters()),
        lr=cfg.lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
    )
    opt_disc = torch.optim.Adam(
        list(bundle.discriminator.parameters()),
        lr=cfg.lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
    )
    extractor = extractor if extractor is not None else load_feature_extractor()
    return TrainState(cfg, bundle, opt_gen, opt_disc, extractor)


def prepare_batch(hazy_np):
    """Classical preprocessing for a B x H x W x 3 batch: rough dehaze and
    dark channel (broadcast to 3 channels), both gradient-free."""
    dcp_cfg = DcpConfig()
    rough = np.stack([dcp_dehaze(img, dcp_cfg) for img in hazy_np])
    dark = np.stack([dark_channel(img, dcp_cfg.patch_radius) for img in hazy_np])
    dark3 = np.repeat(dark[:, :, :, None], 3, axis=3)
    return to_tensor(rough), to_tensor(dark3)


def _usable_scales(levels):
    return [
        (i, lv) for i, lv in enumerate(levels) if min(lv.shape[-2:]) >= Discriminator.MIN_SIZE
    ]


def forward_pipeline(state, hazy_t, rough_t, dark3_t):
    """Run the three coupled networks and re-haze the output.

    The scattering model is the only coupling: rehazed = J*t + A*(1-t).
    """
    bundle = state.bundle
    dehazed = bundle.generator(rough_t)
    f_dark, f_hazy = shared_encode(bundle.shared_encoder, dark3_t, hazy_t)
    airlight = bundle.airlight_attention(f_dark, f_hazy)
    trans = bundle.transmission(hazy_t)
    rehazed = (dehazed * trans + airlight.a_inf * (1.0 - trans)).clamp(0.0, 1.0)
    return dehazed, airlight, trans, rehazed


def train_step(state, hazy_np, ref_np, audit=False):
    """One critic update followed by one generator-side update.

    Returns the (mutated) state and the step's loss report. ``audit``
    additionally asserts the gradient separation between the two updates.
    """
    cfg = state.config
    w = cfg.loss_weights
    bundle = state.bundle
    hazy_t = to_tensor(hazy_np)
    ref_t = to_tensor(ref_np)
    rough_t, dark3_t = prepare_batch(hazy_np)

    dehazed, airlight, trans, rehazed = forward_pipeline(state, hazy_t, rough_t, dark3_t)
    out_levels = scale_levels(dehazed, cfg.msr_scales)
    ref_levels = scale_levels(ref_t, cfg.msr_scales)
    # The critic cannot take scales below its minimum input; at paper-scale
    # crops (256px) every scale qualifies.
    adv_idx = [i for i, _ in _usable_scales(out_levels)]
    adv_out = [out_levels[i] for i in adv_idx]
    adv_ref = [ref_levels[i] for i in adv_idx]

    # Critic update on references vs detached outputs.
    disc_loss_val = float("nan")
    if adv_out and w.omega1 > 0:
        disc_loss, _ = L.msa_loss_discriminator(
            bundle.discriminator, adv_ref, [lv.detach() for lv in adv_out]
        )
        if not torch.isfinite(disc_loss):
            raise NumericalError(f"non-finite discriminator loss at step {state.step}")
        state.opt_disc.zero_grad(set_to_none=True)
        disc_loss.backward()
        if audit:
            _assert_no_grad(bundle.generator_side_parameters(), "generator side", "critic")
        state.opt_disc.step()
        state.opt_disc.zero_grad(set_to_none=True)
        disc_loss_val = float(disc_loss.detach())

    # Generator-side update; the critic's parameters are frozen for it.
    _set_requires_grad(bundle.discriminator, False)
    if adv_out and w.omega1 > 0:
        msa, msa_raw = L.msa_loss_generator(bundle.discriminator, adv_out)
        msa_per_scale = {adv_idx[k]: v for k, v in msa_raw.items()}
    else:
        msa, msa_per_scale = torch.zeros(()), {}
    msc, msc_per_term = L.msc_loss(state.extractor, out_levels, ref_levels, w)
    _, rec_components = L.reconstruction_loss(rehazed, hazy_t, state.extractor, w)
    total, report = L.total_loss(
        w, msa, msc, rec_components, msa_per_scale, msc_per_term, disc=disc_loss_val
    )
    _check_finite(report, state.step)
    state.opt_gen.zero_grad(set_to_none=True)
    total.backward()
    if audit:
        _assert_no_grad(bundle.discriminator.parameters(), "critic", "generator side")
    state.opt_gen.step()
    state.opt_gen.zero_grad(set_to_none=True)
    _set_requires_grad(bundle.discriminator, True)

    state.step += 1
    state.history.append(report)
    return state, report


def _assert_no_grad(params, owner, update):
    for p in params:
        if p.grad is not None and float(p.grad.abs().max()) != 0.0:
            raise AssertionError(f"{update} update leaked gradient into {owner} parameters")


def _check_finite(report, step):
    for name in ("msa", "msc", "rec_l1", "rec_perceptual", "rec_ssim"):
        if not np.isfinite(getattr(report, name)):
            raise NumericalError(f"non-finite loss component {name!r} at step {step}")


def _apply_lr(state, epoch):
    factor = lr_factor(epoch, state.config.epochs)
    for opt in (state.opt_gen, state.opt_disc):
        for group in opt.param_groups:
            group["lr"] = state.config.lr * factor


def _batch_for_step(cfg, records, step, steps_per_epoch):
    epoch = step // steps_per_epoch
    slot = step % steps_per_epoch
    order = epoch_order(len(records), cfg.seed, epoch)
    idx = order[slot * cfg.batch : (slot + 1) * cfg.batch]
    pairs = [
        prepare_pair(
            records[int(k)], True, cfg.seed, (epoch, slot, int(k)), cfg.resize_to, cfg.crop
        )
        for k in idx
    ]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def fit(cfg, manifest, state=None, max_steps=None, audit=False):
    """Train on the manifest's train split; returns the final state.

    Writes ``losses.csv`` under ``cfg.out_dir`` (appending on resume) and a
    final checkpoint under ``cfg.out_dir/checkpoint``. ``max_steps`` stops
    early at a global step count, for staged runs.
    """
    records = manifest.split("train")
    if not records:
        raise ArgumentError("manifest has no train records")
    if state is None:
        state = init_state(cfg)
    else:
        cfg = state.config  # a resumed run follows its checkpointed config
    steps_per_epoch = max(1, len(records) // cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "losses.csv")
    mode = "a" if state.step > 0 and os.path.exists(csv_path) else "w"
    with open(csv_path, mode) as csv:
        if mode == "w":
            csv.write(L.LossReport.csv_header() + "\n")
        while state.step < total_steps:
            _apply_lr(state, state.step // steps_per_epoch)
            hazy_np, ref_np = _batch_for_step(cfg, records, state.step, steps_per_epoch)
            step_before = state.step
            state, report = train_step(state, hazy_np, ref_np, audit=audit)
            csv.write(report.csv_row(step_before) + "\n")
            if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                save_state(state, os.path.join(cfg.out_dir, f"step{state.step:06d}"))
    save_state(state, os.path.join(cfg.out_dir, "checkpoint"))
    return state


def _optimizer_tensors(state):
    tensors = {}
    for tag, opt, params in (
        ("gen", state.opt_gen, list(state.bundle.generator_side_parameters())),
        ("disc", state.opt_disc, list(state.bundle.discriminator.parameters())),
    ):
        for i, p in enumerate(params):
            slot = opt.state.get(p)
            if not slot:
                continue
            for key in ("step", "exp_avg", "exp_avg_sq"):
                tensors[f"{tag}/{i}/{key}"] = slot[key].float()
    return tensors


def save_state(state, path):
    """Persist model, optimizer moments, and counters for bit-exact resume."""
    from ..networks import _write_tensor_dir

    os.makedirs(path, exist_ok=True)
    save_bundle(state.bundle, os.path.join(path, MODEL_DIR))
    _write_tensor_dir(os.path.join(path, OPTIM_DIR), _optimizer_tensors(state), {})
    save_config(state.config, os.path.join(path, "config.json"))
    with open(os.path.join(path, STATE_FILE), "w") as f:
        import json

        json.dump({"step": state.step}, f)


def load_state(path, extractor=None):
    """Rebuild a TrainState whose next step matches the saved run exactly."""
    import json

    from ..networks import _read_tensor_dir

    cfg = load_config(os.path.join(path, "config.json"))
    bundle = load_bundle(os.path.join(path, MODEL_DIR))
    state = init_state(cfg, extractor=extractor)
    state.bundle = bundle
    state.opt_gen = torch.optim.Adam(
        list(bundle.generator_side_parameters()), lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    state.opt_disc = torch.optim.Adam(
        list(bundle.discriminator.parameters()), lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    tensors, _ = _read_tensor_dir(os.path.join(path, OPTIM_DIR))
    param_lists = {
        "gen": list(bundle.generator_side_parameters()),
        "disc": list(bundle.discriminator.parameters()),
    }
    opts = {"gen": state.opt_gen, "disc": state.opt_disc}
    slots = {}
    for name, arr in tensors.items():
        tag, idx, key = name.split("/")
        slots.setdefault((tag, int(idx)), {})[key] = torch.from_numpy(arr)
    for (tag, idx), slot in slots.items():
        param = param_lists[tag][idx]
        opts[tag].state[param] = {
            "step": slot["step"],
            "exp_avg": slot["exp_avg"],
            "exp_avg_sq": slot["exp_avg_sq"],
        }
    with open(os.path.join(path, STATE_FILE)) as f:
        state.step = json.load(f)["step"]
    return state
