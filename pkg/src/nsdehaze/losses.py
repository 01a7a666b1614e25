"""Training objectives.

The reference-side loss compares the dehazed output against the non-aligned
clear reference at three scales, through an adversarial term and a
contextual (feature-set) term. The reconstruction loss re-hazes the output
through the scattering model and compares against the hazy input with L1,
perceptual, and structural terms; it never sees the reference.
"""

import numpy as np
import torch
import torch.nn.functional as F
from dataclasses import dataclass, field

from .errors import ArgumentError, ShapeError
from .torchops import ssim_t

LOGIT_CLAMP = 30.0
CX_FLOOR = 1e-12


@dataclass
class LossWeights:
    omega1: float = 1.0  # adversarial weight
    omega2: float = 1.0  # contextual weight
    theta: float = 5.0  # L1 weight
    gamma: float = 1.0  # perceptual weight
    eta: float = 1.0  # SSIM weight
    cx_bandwidth: float = 0.5
    cx_epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("omega1", "omega2", "theta", "gamma", "eta"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be >= 0")
        if self.cx_bandwidth <= 0:
            raise ArgumentError(f"cx_bandwidth must be positive, got {self.cx_bandwidth}")


@dataclass
class LossReport:
    """Scalar summary of one generator-side step; components unweighted."""

    total: float
    msa: float
    msc: float
    rec_l1: float
    rec_perceptual: float
    rec_ssim: float
    msa_per_scale: dict = field(default_factory=dict)
    msc_per_term: dict = field(default_factory=dict)
    disc: float = float("nan")  # bookkeeping only, not part of the total

    CSV_COLUMNS = ("step", "total", "msa", "msc", "rec_l1", "rec_p", "rec_ssim")

    @staticmethod
    def csv_header():
        return ",".join(LossReport.CSV_COLUMNS)

    def csv_row(self, step):
        values = (self.total, self.msa, self.msc, self.rec_l1, self.rec_perceptual, self.rec_ssim)
        return ",".join([str(step)] + [repr(float(v)) for v in values])


def bce_logits(logits, target):
    """Binary cross-entropy on logits clamped to +-30 for numerical safety."""
    logits = logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    targets = torch.full_like(logits, float(target))
    return F.binary_cross_entropy_with_logits(logits, targets)


def _as_feature_sets(f):
    t = torch.as_tensor(f)
    if t.dim() == 2:  # N x C single set
        return t.unsqueeze(0)
    if t.dim() == 4:  # B x C x H x W
        return t.flatten(2).transpose(1, 2)
    raise ShapeError(f"expected N x C or B x C x H x W features, got {tuple(t.shape)}")


def _subsample(sets, cap):
    n = sets.shape[1]
    if n <= cap:
        return sets
    # Deterministic thinning keyed on the set size, independent of call order.
    rng = np.random.default_rng(np.random.SeedSequence([n, cap, 0xCE11]))
    idx = torch.as_tensor(np.sort(rng.choice(n, size=cap, replace=False)), device=sets.device)
    return sets.index_select(1, idx)


def contextual_similarity(fx, fy, h=0.5, eps=1e-5, max_features=512):
    """Set-level similarity in (0, 1]: every reference feature is matched to
    its best-affinity output feature.

    Features are flattened over spatial positions, mean-centered by the
    reference set's mean, and compared by cosine distance; larger sets are
    deterministically thinned to ``max_features`` positions.
    """
    xs = _as_feature_sets(fx)
    ys = _as_feature_sets(fy)
    if xs.shape[0] != ys.shape[0] or xs.shape[2] != ys.shape[2]:
        raise ShapeError(f"feature sets disagree: {tuple(xs.shape)} vs {tuple(ys.shape)}")
    if xs.shape[1] == 0 or ys.shape[1] == 0:
        raise ArgumentError("empty feature set")
    xs = _subsample(xs, max_features)
    ys = _subsample(ys, max_features)

    y_mu = ys.mean(dim=1, keepdim=True)
    xn = F.normalize(xs - y_mu, dim=2, eps=1e-12)
    yn = F.normalize(ys - y_mu, dim=2, eps=1e-12)
    dist = 1.0 - torch.bmm(xn, yn.transpose(1, 2))  # B x Nx x Ny
    dist_rel = dist / (dist.min(dim=2, keepdim=True).values + eps)
    w = torch.exp((1.0 - dist_rel) / h)
    cx_ij = w / w.sum(dim=2, keepdim=True)
    cx = cx_ij.max(dim=1).values.mean(dim=1)  # best output match per reference feature
    return cx.mean()


def msc_loss(extractor, out_levels, ref_levels, weights=None, layers=(1, 2, 3)):
    """Multi-scale contextual loss: -log similarity summed over every
    (scale, extractor tap) combination.

    Returns the scalar loss and the per-term breakdown keyed by
    (scale index, layer id).
    """
    weights = weights or LossWeights()
    if len(out_levels) != len(ref_levels):
        raise ShapeError("scale lists differ in length")
    total = None
    breakdown = {}
    for i, (out_i, ref_i) in enumerate(zip(out_levels, ref_levels)):
        feats_out = extractor(out_i, layers)
        feats_ref = extractor(ref_i, layers)
        for layer, fo, fr in zip(layers, feats_out, feats_ref):
            cx = contextual_similarity(fo, fr, weights.cx_bandwidth, weights.cx_epsilon)
            term = -torch.log(cx.clamp_min(CX_FLOOR))
            breakdown[(i, layer)] = float(term.detach())
            total = term if total is None else total + term
    return total, breakdown


def msa_loss_discriminator(disc, ref_levels, out_levels):
    """Critic objective summed over scales: real references vs fakes."""
    if len(ref_levels) != len(out_levels):
        raise ShapeError("scale lists differ in length")
    total = None
    breakdown = {}
    for i, (ref_i, out_i) in enumerate(zip(ref_levels, out_levels)):
        term = bce_logits(disc(ref_i), 1.0) + bce_logits(disc(out_i), 0.0)
        breakdown[i] = float(term.detach())
        total = term if total is None else total + term
    return total, breakdown


def msa_loss_generator(disc, out_levels):
    """Non-saturating generator objective summed over scales."""
    total = None
    breakdown = {}
    for i, out_i in enumerate(out_levels):
        term = bce_logits(disc(out_i), 1.0)
        breakdown[i] = float(term.detach())
        total = term if total is None else total + term
    return total, breakdown


def reconstruction_loss(i_rec, i_orig, extractor, weights=None, layers=(1, 2, 3)):
    """Re-hazing consistency: weighted L1 + perceptual + structural terms.

    Returns the weighted sum and the unweighted components.
    """
    weights = weights or LossWeights()
    if i_rec.shape != i_orig.shape:
        raise ShapeError(f"shape mismatch: {tuple(i_rec.shape)} vs {tuple(i_orig.shape)}")
    l1 = (i_rec - i_orig).abs().mean()
    feats_rec = extractor(i_rec, layers)
    feats_orig = extractor(i_orig, layers)
    perceptual = sum((fr - fo).abs().mean() for fr, fo in zip(feats_rec, feats_orig))
    ssim_term = 1.0 - ssim_t(i_rec, i_orig)
    components = {"l1": l1, "perceptual": perceptual, "ssim": ssim_term}
    total = weights.theta * l1 + weights.gamma * perceptual + weights.eta * ssim_term
    return total, components


def total_loss(weights, msa, msc, rec_components, msa_per_scale=None, msc_per_term=None,
               disc=float("nan")):
    """Combine the generator-side terms into a tensor total and a report.

    The report's total is recomputed from the float components in float64,
    so the stored value satisfies the weighted-sum identity exactly.
    """
    terms = {
        "msa": msa,
        "msc": msc,
        "rec_l1": rec_components["l1"],
        "rec_perceptual": rec_components["perceptual"],
        "rec_ssim": rec_components["ssim"],
    }
    total_t = (
        weights.omega1 * terms["msa"]
        + weights.omega2 * terms["msc"]
        + weights.theta * terms["rec_l1"]
        + weights.gamma * terms["rec_perceptual"]
        + weights.eta * terms["rec_ssim"]
    )
    floats = {k: float(v.detach() if torch.is_tensor(v) else v) for k, v in terms.items()}
    report = LossReport(
        total=(
            weights.omega1 * floats["msa"]
            + weights.omega2 * floats["msc"]
            + weights.theta * floats["rec_l1"]
            + weights.gamma * floats["rec_perceptual"]
            + weights.eta * floats["rec_ssim"]
        ),
        msa=floats["msa"],
        msc=floats["msc"],
        rec_l1=floats["rec_l1"],
        rec_perceptual=floats["rec_perceptual"],
        rec_ssim=floats["rec_ssim"],
        msa_per_scale=dict(msa_per_scale or {}),
        msc_per_term=dict(msc_per_term or {}),
        disc=disc,
    )
    return total_t, report
