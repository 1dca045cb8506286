"""Per-tile CNN/ViT backbones returning one global-pooled embedding per tile."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
import torchvision
from torch import nn
from torchvision.models.detection.backbone_utils import mobilenet_backbone

from smokeynet.models.config import Backbone, ConfigError

DEIT_TINY_URL = "https://dl.fbaipublicfiles.com/deit/deit_tiny_patch16_224-a1311bcf.pth"


def _replace_first_conv(module: nn.Module, in_channels: int) -> None:
    """Swap the first Conv2d for one taking ``in_channels`` inputs.

    Pretrained RGB filters are averaged over channels so a gray input sees
    the same response scale.
    """
    for parent in module.modules():
        for name, child in parent.named_children():
            if isinstance(child, nn.Conv2d):
                if child.in_channels == in_channels:
                    return
                new = nn.Conv2d(
                    in_channels,
                    child.out_channels,
                    child.kernel_size,
                    child.stride,
                    child.padding,
                    child.dilation,
                    1,
                    child.bias is not None,
                )
                with torch.no_grad():
                    mean = child.weight.mean(dim=1, keepdim=True)
                    new.weight.copy_(mean.expand(-1, in_channels, -1, -1))
                    if child.bias is not None:
                        new.bias.copy_(child.bias)
                setattr(parent, name, new)
                return
    raise ValueError("module has no Conv2d layer")


class _Pooled(nn.Module):
    def __init__(self, features: nn.Module, dim: int):
        super().__init__()
        self.features = features
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.embed_dim = dim

    def forward(self, x):
        return torch.flatten(self.pool(self.features(x)), 1)


class _ResNet(nn.Module):
    def __init__(self, net: nn.Module, dim: int):
        super().__init__()
        net.fc = nn.Identity()
        self.net = net
        self.embed_dim = dim

    def forward(self, x):
        return self.net(x)


class _DeiT(nn.Module):
    def __init__(self, net: torchvision.models.VisionTransformer):
        super().__init__()
        net.heads = nn.Identity()
        self.net = net
        self.embed_dim = net.hidden_dim

    def forward(self, x):
        return self.net(x)


class FPNTileEmbedding(nn.Module):
    """MobileNetV3-Large FPN per tile, flattened to a fixed-width embedding.

    Each of the three 256-channel pyramid maps is reduced by two 1x1 convs
    to ``per_map // (h*w)`` channels so it flattens to exactly ``per_map``
    features; the concatenation is projected to ``embed_dim``.
    """

    def __init__(self, tile_size: int = 224, pretrained: bool = False, hidden: int = 64,
                 per_map: int = 784, embed_dim: int = 960):
        super().__init__()
        weights = "DEFAULT" if pretrained else None
        self.body = mobilenet_backbone(
            backbone_name="mobilenet_v3_large", weights=weights, fpn=True,
            norm_layer=nn.BatchNorm2d, trainable_layers=6,
        )
        self.body.eval()
        with torch.no_grad():
            shapes = [v.shape for v in self.body(torch.zeros(2, 3, tile_size, tile_size)).values()]
        self.body.train()
        self.map_sizes = [(s[2], s[3]) for s in shapes]
        reducers = []
        for h, w in self.map_sizes:
            if per_map % (h * w):
                raise ConfigError(f"FPN map {h}x{w} cannot flatten to {per_map} features")
            out_ch = per_map // (h * w)
            reducers.append(
                nn.Sequential(
                    nn.Conv2d(shapes[0][1], hidden, 1),
                    nn.ReLU(inplace=True),
                    nn.Conv2d(hidden, out_ch, 1),
                )
            )
        self.reducers = nn.ModuleList(reducers)
        self.per_map = per_map
        self.concat_dim = per_map * len(reducers)
        self.project = nn.Linear(self.concat_dim, embed_dim)
        self.embed_dim = embed_dim

    def flattened_maps(self, x):
        maps = self.body(x).values()
        return [torch.flatten(red(m), 1) for red, m in zip(self.reducers, maps)]

    def forward(self, x):
        return self.project(torch.cat(self.flattened_maps(x), dim=1))


def _deit_tiny(tile_size: int) -> torchvision.models.VisionTransformer:
    return torchvision.models.VisionTransformer(
        image_size=tile_size, patch_size=16, num_layers=12, num_heads=3, hidden_dim=192, mlp_dim=768
    )


def load_deit_tiny_weights(net: torchvision.models.VisionTransformer) -> None:
    """Load the public DeiT-Tiny ImageNet checkpoint into a torchvision ViT."""
    ckpt = torch.hub.load_state_dict_from_url(DEIT_TINY_URL, map_location="cpu", check_hash=True)
    src = ckpt.get("model", ckpt)
    dst = {
        "class_token": src["cls_token"],
        "conv_proj.weight": src["patch_embed.proj.weight"],
        "conv_proj.bias": src["patch_embed.proj.bias"],
        "encoder.ln.weight": src["norm.weight"],
        "encoder.ln.bias": src["norm.bias"],
    }
    pos = src["pos_embed"]
    want = net.encoder.pos_embedding.shape[1] - 1
    if pos.shape[1] - 1 != want:
        cls_pos, grid = pos[:, :1], pos[:, 1:]
        old = int(math.isqrt(grid.shape[1]))
        new = int(math.isqrt(want))
        grid = grid.reshape(1, old, old, -1).permute(0, 3, 1, 2)
        grid = F.interpolate(grid, size=(new, new), mode="bicubic", align_corners=False)
        pos = torch.cat([cls_pos, grid.permute(0, 2, 3, 1).reshape(1, new * new, -1)], dim=1)
    dst["encoder.pos_embedding"] = pos
    for i in range(12):
        s, d = f"blocks.{i}.", f"encoder.layers.encoder_layer_{i}."
        pairs = {
            "norm1": "ln_1", "norm2": "ln_2",
            "attn.qkv": "self_attention.in_proj", "attn.proj": "self_attention.out_proj",
            "mlp.fc1": "mlp.0", "mlp.fc2": "mlp.3",
        }
        for a, b in pairs.items():
            for kind in ("weight", "bias"):
                key = f"{d}{b}_{kind}" if b == "self_attention.in_proj" else f"{d}{b}.{kind}"
                dst[key] = src[f"{s}{a}.{kind}"]
    net.load_state_dict(dst, strict=False)


def build_backbone(kind: Backbone, in_channels: int = 3, pretrained: bool = False,
                   tile_size: int = 224) -> nn.Module:
    """Backbone module with an ``embed_dim`` attribute; input ``(N, C, t, t)``."""
    weights = "DEFAULT" if pretrained else None
    models = torchvision.models
    if kind is Backbone.RESNET34:
        net = _ResNet(models.resnet34(weights=weights), 512)
    elif kind is Backbone.RESNET50:
        net = _ResNet(models.resnet50(weights=weights), 2048)
    elif kind is Backbone.MOBILENET_V3L:
        net = _Pooled(models.mobilenet_v3_large(weights=weights).features, 960)
    elif kind is Backbone.EFFICIENTNET_B0:
        net = _Pooled(models.efficientnet_b0(weights=weights).features, 1280)
    elif kind is Backbone.MOBILENET_FPN:
        net = FPNTileEmbedding(tile_size=tile_size, pretrained=pretrained)
    elif kind is Backbone.DEIT_TINY:
        vit = _deit_tiny(tile_size)
        if pretrained:
            load_deit_tiny_weights(vit)
        net = _DeiT(vit)
    else:
        raise ConfigError(f"unsupported backbone {kind}")
    if in_channels != 3:
        _replace_first_conv(net, in_channels)
    return net
