"""Model configuration for the detail fusion network."""

from __future__ import annotations

from dataclasses import dataclass, field

N_SCALES = 4
SCALE_FACTORS = (8, 4, 2, 1)  # coarse to fine

# Per-scale fusion-block hyperparameters, coarse to fine. Every block is a
# sequence of stages (one per channel entry); each stage runs one dilated
# conv per listed rate, concatenates and projects 1x1 to the stage width.
# The final stage always emits the 2 blending-mask channels.
DEFAULT_ASPP = (
    {"rates": (1, 3, 5), "channels": (16, 32, 2)},
    {"rates": (1, 3, 6, 12), "channels": (16, 32, 2)},
    {"rates": (1, 3, 6, 12, 15), "channels": (16, 32, 2)},
    {"rates": (1, 3, 6, 12, 15, 18), "channels": (16, 32, 32, 2)},
)

_PATH_MODES = ("both", "w-only", "uw-only")


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 16
    refine_blocks: int = 2           # conv blocks per encoder/decoder stage
    aspp: tuple = DEFAULT_ASPP
    use_occlusion_input: bool = True
    use_radial_mask: bool = True
    paths: str = "both"              # 'w-only' / 'uw-only' drop the other module
    separable: bool = False          # depthwise-separable convs (cheap preset)
    full_res_path: bool = True       # False: stride-2 stem, scale-1 kernels
                                     # predicted at 1/2 res and upsampled
    fusion_entry_channels: int = 0   # >0: 1x1-project fusion inputs first
    fusion_finest_at_half: bool = False  # evaluate the 1x mask block at 1/2 res
    carry_kernel: bool = True        # second dynamic kernel on the carried image
    defocus_scale: float = 0.1       # defocus planes are multiplied by this

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.paths not in _PATH_MODES:
            raise ValueError(f"paths must be one of {_PATH_MODES}")
        if len(self.aspp) != N_SCALES:
            raise ValueError(f"aspp spec needs {N_SCALES} scale entries")
        for entry in self.aspp:
            if not entry["rates"] or not entry["channels"]:
                raise ValueError("aspp stages need rates and channels")
            if entry["channels"][-1] != 2:
                raise ValueError("last aspp stage must emit the 2 mask channels")

    @property
    def w_in_channels(self) -> int:
        return 3 + 2 + (1 if self.use_radial_mask else 0)

    @property
    def uw_in_channels(self) -> int:
        return (3 + 1 + (1 if self.use_occlusion_input else 0)
                + (1 if self.use_radial_mask else 0))

    def to_dict(self) -> dict:
        return {
            "base_channels": self.base_channels,
            "refine_blocks": self.refine_blocks,
            "aspp": [{"rates": list(e["rates"]), "channels": list(e["channels"])}
                     for e in self.aspp],
            "use_occlusion_input": self.use_occlusion_input,
            "use_radial_mask": self.use_radial_mask,
            "paths": self.paths,
            "separable": self.separable,
            "full_res_path": self.full_res_path,
            "fusion_entry_channels": self.fusion_entry_channels,
            "fusion_finest_at_half": self.fusion_finest_at_half,
            "carry_kernel": self.carry_kernel,
            "defocus_scale": self.defocus_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        aspp = tuple({"rates": tuple(e["rates"]), "channels": tuple(e["channels"])}
                     for e in d["aspp"])
        return cls(
            base_channels=int(d["base_channels"]),
            refine_blocks=int(d["refine_blocks"]),
            aspp=aspp,
            use_occlusion_input=bool(d["use_occlusion_input"]),
            use_radial_mask=bool(d["use_radial_mask"]),
            paths=str(d["paths"]),
            separable=bool(d["separable"]),
            full_res_path=bool(d["full_res_path"]),
            fusion_entry_channels=int(d["fusion_entry_channels"]),
            fusion_finest_at_half=bool(d["fusion_finest_at_half"]),
            carry_kernel=bool(d["carry_kernel"]),
            defocus_scale=float(d["defocus_scale"]),
        )

    @classmethod
    def tiny(cls, paths: str = "both", use_occlusion_input: bool = True) -> "ModelConfig":
        """Desk-scale CPU preset: same topology, slim widths, half-res stem,
        depthwise fusion branches."""
        aspp = (
            {"rates": (1, 3, 5), "channels": (6, 2)},
            {"rates": (1, 4, 8), "channels": (6, 2)},
            {"rates": (1, 5, 10), "channels": (6, 2)},
            {"rates": (1, 6, 12), "channels": (6, 2)},
        )
        return cls(base_channels=8, refine_blocks=1, aspp=aspp,
                   use_occlusion_input=use_occlusion_input,
                   paths=paths, separable=False, full_res_path=False,
                   fusion_entry_channels=6, fusion_finest_at_half=True,
                   carry_kernel=False)
