"""The trainable graphs and their checkpoint format.

Five components: the residual dehazing generator, a shared U-shaped
encoder feeding the airlight head, the mean/variance self-attention
airlight head itself, the channel-attention transmission network, and a
compact patch discriminator. A frozen convolutional feature extractor
(pretrained weights optional) backs the perceptual and contextual losses.
"""

import json
import os

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from dataclasses import asdict, dataclass, field

from .errors import ArgumentError, FormatError, NotFoundError, ShapeError
from .torchops import guided_filter_t

WEIGHTS_ENV_VAR = "NSDEHAZE_WEIGHTS"

# Per-channel normalization applied before the feature extractor.
FEATURE_MEAN = (0.485, 0.456, 0.406)
FEATURE_STD = (0.229, 0.224, 0.225)


@dataclass
class NetworkConfig:
    base_channels: int = 64
    generator_res_blocks: int = 9
    alpha: float = 1.2
    mu: float = 0.25e-3
    top_frac: float = 0.01
    t_floor: float = 0.05
    gf_radius: int = 4
    gf_eps: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ArgumentError(f"alpha must be positive, got {self.alpha}")
        if self.mu < 0:
            raise ArgumentError(f"mu must be >= 0, got {self.mu}")
        if not 0 < self.top_frac <= 1:
            raise ArgumentError(f"top_frac must be in (0, 1], got {self.top_frac}")
        if self.base_channels % 8 != 0:
            raise ArgumentError(
                f"base_channels must be divisible by 8, got {self.base_channels}"
            )


def _require_multiple(x, k, who):
    h, w = x.shape[-2:]
    if h % k or w % k:
        raise ShapeError(f"{who} needs H, W divisible by {k}, got {h}x{w}")


def init_gan_weights(module, std=0.02):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


class ResnetBlock(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(dim, dim, 3),
            nn.InstanceNorm2d(dim),
            nn.ReLU(True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(dim, dim, 3),
            nn.InstanceNorm2d(dim),
        )

    def forward(self, x):
        return x + self.block(x)


class Generator(nn.Module):
    """Residual image-to-image generator: c7s1 stem, two stride-2 downs,
    N residual blocks, two stride-2 ups, c7s1 head squashed to [0, 1]."""

    def __init__(self, base_channels=64, n_blocks=9):
        super().__init__()
        c = base_channels
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, c, 7),
            nn.InstanceNorm2d(c),
            nn.ReLU(True),
        ]
        for mult in (1, 2):
            layers += [
                nn.Conv2d(c * mult, c * mult * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(c * mult * 2),
                nn.ReLU(True),
            ]
        layers += [ResnetBlock(c * 4) for _ in range(n_blocks)]
        for mult in (4, 2):
            layers += [
                nn.ConvTranspose2d(c * mult, c * mult // 2, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(c * mult // 2),
                nn.ReLU(True),
            ]
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(c, 3, 7), nn.Sigmoid()]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        _require_multiple(x, 4, "generator")
        return self.model(x)


class SqueezeExcite(nn.Module):
    def __init__(self, channels, reduction=8):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc = nn.Sequential(
            nn.Linear(channels, hidden),
            nn.ReLU(True),
            nn.Linear(hidden, channels),
            nn.Sigmoid(),
        )

    def forward(self, x):
        b, c = x.shape[:2]
        gate = self.fc(x.mean(dim=(2, 3))).view(b, c, 1, 1)
        return x * gate


def _conv_block(c_in, c_out, norm=True):
    # norm=False is for bottleneck blocks whose spatial extent can shrink to
    # a single element, which instance normalization rejects.
    layers = [nn.Conv2d(c_in, c_out, 3, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(c_out))
    layers += [nn.ReLU(True), nn.Conv2d(c_out, c_out, 3, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(c_out))
    layers.append(nn.ReLU(True))
    return nn.Sequential(*layers)


class SharedEncoder(nn.Module):
    """U-shaped encoder-decoder with skips; one weight set applied to both
    the dark-channel image and the hazy image. Output keeps input resolution
    with ``base_channels`` channels."""

    def __init__(self, base_channels=64):
        super().__init__()
        c = base_channels
        self.e0 = _conv_block(3, c)
        self.e1 = _conv_block(c, c * 2)
        self.e2 = _conv_block(c * 2, c * 4)
        self.bottleneck = _conv_block(c * 4, c * 8)
        self.pool = nn.MaxPool2d(2)
        self.up2 = nn.ConvTranspose2d(c * 8, c * 4, 2, stride=2)
        self.d2 = _conv_block(c * 8, c * 4)
        self.up1 = nn.ConvTranspose2d(c * 4, c * 2, 2, stride=2)
        self.d1 = _conv_block(c * 4, c * 2)
        self.up0 = nn.ConvTranspose2d(c * 2, c, 2, stride=2)
        self.d0 = _conv_block(c * 2, c)

    def forward(self, x):
        _require_multiple(x, 8, "shared encoder")
        s0 = self.e0(x)
        s1 = self.e1(self.pool(s0))
        s2 = self.e2(self.pool(s1))
        h = self.bottleneck(self.pool(s2))
        h = self.d2(torch.cat([self.up2(h), s2], dim=1))
        h = self.d1(torch.cat([self.up1(h), s1], dim=1))
        return self.d0(torch.cat([self.up0(h), s0], dim=1))


def shared_encode(encoder, dark_img, hazy_img):
    """Run the shared encoder over the dark-channel image and the hazy image."""
    if dark_img.shape != hazy_img.shape:
        raise ShapeError(
            f"dark {tuple(dark_img.shape)} vs hazy {tuple(hazy_img.shape)}"
        )
    return encoder(dark_img), encoder(hazy_img)


def select_top_frac(brightness, frac):
    """Indices of the ceil(frac * N) brightest entries per batch row.

    Stable descending sort, so ties break in row-major (flattened) order.
    """
    if not 0 < frac <= 1:
        raise ArgumentError(f"frac must be in (0, 1], got {frac}")
    n = brightness.shape[-1]
    n_sel = int(np.ceil(frac * n))
    order = torch.argsort(-brightness, dim=-1, stable=True)
    return order[..., :n_sel]


@dataclass
class AirlightEstimate:
    """Airlight decomposition: pooled mean map, spatial variation map, their
    weighted combination (clamped and raw), the attended feature map, and
    the raw attention weights (one row per query position, rows sum to 1)."""

    a_mean: torch.Tensor
    a_var: torch.Tensor
    a_inf: torch.Tensor
    a_inf_raw: torch.Tensor
    attention: torch.Tensor
    attention_weights: torch.Tensor


class MeanVarianceAttention(nn.Module):
    """Mean/variance self-attention airlight head.

    Queries come from hazy features, keys from dark-channel features, and
    values from hazy features; keys/values are 4x4-maxpooled. The pooled
    mean component broadcasts the mean over the top brightest fraction of
    pixels, and the variation component is a projection of |v - attended|.
    """

    def __init__(self, channels, alpha=1.2, mu=0.25e-3, top_frac=0.01):
        super().__init__()
        if channels % 8 != 0:
            raise ArgumentError(f"channels must be divisible by 8, got {channels}")
        embed = channels // 8
        self.alpha = alpha
        self.mu = mu
        self.top_frac = top_frac
        self.conv_q = nn.Conv2d(channels, embed, 1)
        self.conv_k = nn.Conv2d(channels, embed, 1)
        self.conv_v = nn.Conv2d(channels, embed, 1)
        self.pool = nn.MaxPool2d(4)
        self.conv_var = nn.Conv2d(embed, 3, 1)
        self.conv_mean = nn.Conv2d(embed, 3, 1)

    def forward(self, f_dark, f_hazy):
        if f_dark.shape != f_hazy.shape:
            raise ShapeError(
                f"feature shapes differ: {tuple(f_dark.shape)} vs {tuple(f_hazy.shape)}"
            )
        _require_multiple(f_hazy, 4, "attention head")
        b, _, h, w = f_hazy.shape
        q = self.conv_q(f_hazy)
        k_hat = self.pool(self.conv_k(f_dark))
        v = self.conv_v(f_hazy)
        v_hat = self.pool(v)

        q_flat = q.flatten(2).transpose(1, 2)  # B x HW x C/8
        k_flat = k_hat.flatten(2)  # B x C/8 x HW/16
        attn = torch.softmax(torch.bmm(q_flat, k_flat), dim=-1)  # B x HW x HW/16
        f_att = torch.bmm(attn, v_hat.flatten(2).transpose(1, 2))  # B x HW x C/8
        f_att = f_att.transpose(1, 2).reshape(b, -1, h, w)

        a_var = self.conv_var(torch.abs(v - f_att))
        mean_map = self.conv_mean(f_att)
        brightness = mean_map.mean(dim=1).flatten(1)  # B x HW
        idx = select_top_frac(brightness, self.top_frac)
        flat = mean_map.flatten(2)  # B x 3 x HW
        picked = torch.gather(flat, 2, idx.unsqueeze(1).expand(-1, 3, -1))
        a_mean = picked.mean(dim=2).view(b, 3, 1, 1).expand(-1, -1, h, w)

        a_inf_raw = self.alpha * a_mean + self.mu * a_var
        return AirlightEstimate(
            a_mean=a_mean,
            a_var=a_var,
            a_inf=a_inf_raw.clamp(0.0, 1.0),
            a_inf_raw=a_inf_raw,
            attention=f_att,
            attention_weights=attn,
        )


class TransmissionNet(nn.Module):
    """Channel-attention U-net producing a three-channel transmission map.

    Four stride-2 encoder levels with squeeze-excitation after each block;
    the sigmoid head is rescaled to [t_floor, 1] and refined by a guided
    filter steered by the hazy input.
    """

    def __init__(self, base_channels=64, t_floor=0.05, gf_radius=4, gf_eps=1e-4):
        super().__init__()
        c = base_channels
        self.t_floor = t_floor
        self.gf_radius = gf_radius
        self.gf_eps = gf_eps
        widths = [c, c * 2, c * 4, c * 8, c * 8]
        self.enc = nn.ModuleList()
        self.se = nn.ModuleList()
        prev = 3
        for i, wd in enumerate(widths):
            self.enc.append(_conv_block(prev, wd, norm=i < len(widths) - 1))
            self.se.append(SqueezeExcite(wd))
            prev = wd
        self.pool = nn.MaxPool2d(2)
        self.ups = nn.ModuleList()
        self.dec = nn.ModuleList()
        for lo, hi in zip(widths[:-1][::-1], widths[1:][::-1]):
            self.ups.append(nn.ConvTranspose2d(hi, lo, 2, stride=2))
            self.dec.append(_conv_block(lo * 2, lo))
        self.head = nn.Conv2d(c, 3, 3, padding=1)

    def forward(self, hazy):
        _require_multiple(hazy, 16, "transmission network")
        skips = []
        h = hazy
        for i, (enc, se) in enumerate(zip(self.enc, self.se)):
            if i > 0:
                h = self.pool(h)
            h = se(enc(h))
            skips.append(h)
        h = skips.pop()
        for up, dec in zip(self.ups, self.dec):
            h = dec(torch.cat([up(h), skips.pop()], dim=1))
        t = self.t_floor + (1.0 - self.t_floor) * torch.sigmoid(self.head(h))
        t = guided_filter_t(hazy, t, self.gf_radius, self.gf_eps)
        return t.clamp(self.t_floor, 1.0)


class Discriminator(nn.Module):
    """Compact 5-layer stride-2 patch critic, mean-pooled to one logit."""

    MIN_SIZE = 32

    def __init__(self):
        super().__init__()
        self.model = nn.Sequential(
            nn.Conv2d(3, 64, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, True),
            nn.Conv2d(64, 128, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(128),
            nn.LeakyReLU(0.2, True),
            nn.Conv2d(128, 256, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(256),
            nn.LeakyReLU(0.2, True),
            nn.Conv2d(256, 512, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(512),
            nn.LeakyReLU(0.2, True),
            nn.Conv2d(512, 1, 4, stride=2, padding=1),
        )

    def forward(self, img):
        h, w = img.shape[-2:]
        if h < self.MIN_SIZE or w < self.MIN_SIZE:
            raise ShapeError(
                f"discriminator needs inputs >= {self.MIN_SIZE}px, got {h}x{w}"
            )
        return self.model(img).mean(dim=(1, 2, 3))


class FeatureExtractor(nn.Module):
    """Frozen convolutional feature stack with three default taps.

    The architecture is the convolutional prefix of a 16-layer classifier;
    taps sit after the second, fourth, and seventh activations and carry
    64, 128, and 256 channels. Weights come from a checkpoint directory, or
    from a fixed-seed random initialization when none is supplied.
    """

    TAP_CHANNELS = (64, 128, 256)

    def __init__(self):
        super().__init__()
        self.block1 = nn.Sequential(
            nn.Conv2d(3, 64, 3, padding=1), nn.ReLU(True),
            nn.Conv2d(64, 64, 3, padding=1), nn.ReLU(True),
        )
        self.block2 = nn.Sequential(
            nn.MaxPool2d(2),
            nn.Conv2d(64, 128, 3, padding=1), nn.ReLU(True),
            nn.Conv2d(128, 128, 3, padding=1), nn.ReLU(True),
        )
        self.block3 = nn.Sequential(
            nn.MaxPool2d(2),
            nn.Conv2d(128, 256, 3, padding=1), nn.ReLU(True),
            nn.Conv2d(256, 256, 3, padding=1), nn.ReLU(True),
            nn.Conv2d(256, 256, 3, padding=1), nn.ReLU(True),
        )
        mean = torch.tensor(FEATURE_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(FEATURE_STD).view(1, 3, 1, 1)
        self.register_buffer("input_mean", mean)
        self.register_buffer("input_std", std)
        self._random_init()
        self.requires_grad_(False)
        self.eval()

    def _random_init(self):
        gen = torch.Generator().manual_seed(0xFEA7)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                with torch.no_grad():
                    m.weight.copy_(
                        torch.randn(m.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5
                    )
                    m.bias.zero_()

    def forward(self, x, layers=(1, 2, 3)):
        if any(l not in (1, 2, 3) for l in layers):
            raise ArgumentError(f"valid tap ids are 1, 2, 3; got {layers}")
        x = (x - self.input_mean.to(x.dtype)) / self.input_std.to(x.dtype)
        taps = {}
        x = self.block1(x)
        taps[1] = x
        x = self.block2(x)
        taps[2] = x
        x = self.block3(x)
        taps[3] = x
        return [taps[l] for l in layers]


def feature_extract(extractor, img, layers=(1, 2, 3)):
    """Tap activations for one H x W x 3 image (see FeatureExtractor)."""
    from .torchops import to_tensor

    with torch.no_grad():
        return extractor(to_tensor(img, next(extractor.parameters()).dtype), layers)


def load_feature_extractor(weights_path=None):
    """Build the frozen extractor, honoring the weights env var.

    Explicitly passing a path makes missing weights an error; otherwise the
    env var is consulted and absence falls back to the fixed random init.
    """
    explicit = weights_path is not None
    if weights_path is None:
        weights_path = os.environ.get(WEIGHTS_ENV_VAR) or None
    extractor = FeatureExtractor()
    if weights_path is not None:
        if not os.path.isdir(weights_path):
            if explicit or not os.path.exists(weights_path):
                raise NotFoundError(f"feature extractor weights not found: {weights_path}")
        tensors, _ = _read_tensor_dir(weights_path)
        state = {k: torch.from_numpy(v) for k, v in tensors.items()}
        # normalization buffers may be omitted from weight files, but every
        # learnable parameter must be present: a silent partial load would
        # leave random layers behind pretrained ones
        missing = {name for name, _ in extractor.named_parameters()} - set(state)
        if missing:
            raise FormatError(f"weights at {weights_path} missing parameters: {sorted(missing)[:4]}")
        extractor.load_state_dict(state, strict=False)
        extractor.requires_grad_(False)
    return extractor


@dataclass
class ModelBundle:
    """The five trainable parameter sets plus their configuration."""

    config: NetworkConfig
    generator: Generator
    shared_encoder: SharedEncoder
    airlight_attention: MeanVarianceAttention
    transmission: TransmissionNet
    discriminator: Discriminator

    def components(self):
        return {
            "generator": self.generator,
            "shared_encoder": self.shared_encoder,
            "airlight_attention": self.airlight_attention,
            "transmission": self.transmission,
            "discriminator": self.discriminator,
        }

    def generator_side_parameters(self):
        for name, module in self.components().items():
            if name != "discriminator":
                yield from module.parameters()


def build_models(config=None):
    """Construct all networks with seed-deterministic initialization."""
    cfg = config or NetworkConfig()
    torch.manual_seed(cfg.seed)
    bundle = ModelBundle(
        config=cfg,
        generator=Generator(cfg.base_channels, cfg.generator_res_blocks),
        shared_encoder=SharedEncoder(cfg.base_channels),
        airlight_attention=MeanVarianceAttention(
            cfg.base_channels, cfg.alpha, cfg.mu, cfg.top_frac
        ),
        transmission=TransmissionNet(
            cfg.base_channels, cfg.t_floor, cfg.gf_radius, cfg.gf_eps
        ),
        discriminator=Discriminator(),
    )
    for module in bundle.components().values():
        init_gan_weights(module)
    return bundle


MANIFEST_NAME = "manifest.json"
BLOB_NAME = "weights.bin"


def _write_tensor_dir(path, tensors, int_state, extra=None):
    os.makedirs(path, exist_ok=True)
    entries = {}
    offset = 0
    with open(os.path.join(path, BLOB_NAME), "wb") as blob:
        for name, tensor in tensors.items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            entries[name] = {
                "shape": list(arr.shape),
                "dtype": "float32",
                "offset": offset,
            }
            blob.write(arr.tobytes())
            offset += arr.nbytes
    manifest = {"tensors": entries, "int_state": int_state}
    if extra:
        manifest.update(extra)
    with open(os.path.join(path, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def _read_tensor_dir(path):
    man_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(man_path):
        raise NotFoundError(f"no checkpoint manifest at {path}")
    with open(man_path) as f:
        manifest = json.load(f)
    with open(os.path.join(path, BLOB_NAME), "rb") as f:
        blob = f.read()
    tensors = {}
    for name, entry in manifest["tensors"].items():
        if entry["dtype"] != "float32":
            raise FormatError(f"unsupported dtype {entry['dtype']} for {name}")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        tensors[name] = arr.reshape(entry["shape"]).copy()
    return tensors, manifest


def save_bundle(bundle, path):
    """Checkpoint: JSON manifest (name -> shape/dtype/offset) + float32 blob.

    Integer bookkeeping buffers (batch counters) live in the manifest, so
    the blob stays pure little-endian float32.
    """
    tensors = {}
    int_state = {}
    for comp_name, module in bundle.components().items():
        for key, value in module.state_dict().items():
            full = f"{comp_name}/{key}"
            if value.dtype.is_floating_point:
                tensors[full] = value
            else:
                int_state[full] = int(value.item())
    _write_tensor_dir(path, tensors, int_state, extra={"config": asdict(bundle.config)})


def load_bundle(path):
    """Rebuild a bundle from a checkpoint directory, bit-exactly."""
    tensors, manifest = _read_tensor_dir(path)
    cfg = NetworkConfig(**manifest["config"])
    bundle = build_models(cfg)
    for comp_name, module in bundle.components().items():
        state = {}
        prefix = comp_name + "/"
        for full, arr in tensors.items():
            if full.startswith(prefix):
                state[full[len(prefix):]] = torch.from_numpy(arr)
        for full, value in manifest["int_state"].items():
            if full.startswith(prefix):
                state[full[len(prefix):]] = torch.tensor(value, dtype=torch.int64)
        module.load_state_dict(state)
    return bundle


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())
