"""
Generator and critic networks.

The generator runs in three stages: an MLP maps noise to metadata, a second
MLP maps (metadata, noise) to the per-sample (center, half_range) fake
metadata, and an LSTM emits S time steps per pass from
[metadata ‖ fake metadata ‖ fresh noise]. Two MLP critics score the full
flattened sample and the metadata part alone.
"""
import json
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from config.run_config import ModelConfig
from dataset.preprocess import EncodedBatch, EncodingLayout
from dataset.schema import Normalization
from utils.exceptions import ContractError

ActivationBlock = Tuple[int, int, str]

_RANGE_ACTIVATION = {Normalization.ZERO_ONE: "sigmoid", Normalization.NEG_ONE_ONE: "tanh"}


def build_mlp(in_dim: int, widths: Sequence[int], out_dim: int) -> nn.Sequential:
    layers: List[nn.Module] = []
    previous = in_dim
    for width in widths:
        layers += [nn.Linear(previous, width), nn.ReLU()]
        previous = width
    layers.append(nn.Linear(previous, out_dim))
    return nn.Sequential(*layers)


def mlp_parameter_count(in_dim: int, widths: Sequence[int], out_dim: int) -> int:
    sizes = [in_dim, *widths, out_dim]
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def lstm_parameter_count(in_dim: int, hidden: int) -> int:
    # torch keeps separate input and hidden biases
    return 4 * (in_dim * hidden + hidden * hidden + 2 * hidden)


class BlockActivation(nn.Module):
    """Softmax per categorical block, sigmoid or tanh per numeric value"""

    def __init__(self, blocks: Sequence[ActivationBlock]):
        super().__init__()
        self.blocks = list(blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        parts = []
        for start, stop, kind in self.blocks:
            chunk = x[..., start:stop]
            if kind == "softmax":
                parts.append(torch.softmax(chunk, dim=-1))
            elif kind == "sigmoid":
                parts.append(torch.sigmoid(chunk))
            else:
                parts.append(torch.tanh(chunk))
        if not parts:
            return x
        return torch.cat(parts, dim=-1)


def metadata_activation_blocks(layout: EncodingLayout) -> List[ActivationBlock]:
    return [
        (block.start, block.stop, "softmax" if spec.is_categorical else _RANGE_ACTIVATION[spec.normalization])
        for block, spec in layout.metadata_blocks()
    ]


def step_activation_blocks(layout: EncodingLayout) -> List[ActivationBlock]:
    """Per-step blocks: measurement dimensions followed by the two flag logits"""
    blocks = [
        (block.start, block.stop, "softmax" if spec.is_categorical else _RANGE_ACTIVATION[spec.normalization])
        for block, spec in layout.measurement_blocks()
    ]
    blocks.append((layout.d_f, layout.d_f + 2, "softmax"))
    return blocks


class MetadataGenerator(nn.Module):
    def __init__(self, layout: EncodingLayout, config: ModelConfig):
        super().__init__()
        self.out_dim = layout.d_a
        self.mlp = build_mlp(config.noise_dim, config.attr_mlp, layout.d_a) if layout.d_a else None
        self.activation = BlockActivation(metadata_activation_blocks(layout))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if self.mlp is None:
            return z.new_zeros((z.shape[0], 0))
        return self.activation(self.mlp(z))


class MinMaxGenerator(nn.Module):
    """Fake metadata (center, half_range per numeric dimension), both in [0, 1]"""

    def __init__(self, layout: EncodingLayout, config: ModelConfig):
        super().__init__()
        self.out_dim = layout.d_fake
        self.mlp = build_mlp(layout.d_a + config.noise_dim, config.minmax_mlp, layout.d_fake) if layout.d_fake else None

    def forward(self, metadata_real: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        if self.mlp is None:
            return z.new_zeros((z.shape[0], 0))
        return torch.sigmoid(self.mlp(torch.cat([metadata_real, z], dim=1)))


class MeasurementGenerator(nn.Module):
    """One LSTM layer; each pass emits S steps of measurements and flags"""

    def __init__(self, layout: EncodingLayout, config: ModelConfig):
        super().__init__()
        self.batch_param = layout.batch_param
        self.step_dim = layout.d_f + 2
        self.d_f = layout.d_f
        self.lstm = nn.LSTM(
            input_size=layout.d_a + layout.d_fake + config.noise_dim,
            hidden_size=config.rnn_units,
            num_layers=1,
            batch_first=True,
        )
        self.head = nn.Linear(config.rnn_units, self.batch_param * self.step_dim)
        self.activation = BlockActivation(step_activation_blocks(layout))

    def forward(self, metadata_all: torch.Tensor, z_seq: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            metadata_all: B x (d_A + d_fake), repeated at every pass
            z_seq: B x passes x noise_dim, fresh noise per pass

        Returns:
            measurements B x (passes*S) x d_f and flags B x (passes*S) x 2
        """
        batch, passes = z_seq.shape[0], z_seq.shape[1]
        inputs = torch.cat([metadata_all.unsqueeze(1).expand(batch, passes, metadata_all.shape[1]), z_seq], dim=2)
        hidden, _ = self.lstm(inputs)
        steps = self.head(hidden).reshape(batch, passes * self.batch_param, self.step_dim)
        steps = self.activation(steps)
        return steps[..., : self.d_f], steps[..., self.d_f:]


class Critic(nn.Module):
    """MLP critic with an unbounded scalar output"""

    def __init__(self, in_dim: int, widths: Sequence[int]):
        super().__init__()
        self.in_dim = in_dim
        self.mlp = build_mlp(in_dim, widths, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 2 or x.shape[1] != self.in_dim:
            raise ContractError(f"critic expects B x {self.in_dim} input, got {tuple(x.shape)}")
        return self.mlp(x)


def mask_after_stop(measurements: torch.Tensor, flags: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Zero every step after the first one whose flag has p1 < p2"""
    stop = (flags[..., 0] < flags[..., 1]).to(flags.dtype)
    stopped_before = torch.cumsum(stop, dim=1) - stop
    keep = (stopped_before == 0).to(flags.dtype).unsqueeze(-1)
    return measurements * keep, flags * keep


def flatten_main_input(
    metadata_real: torch.Tensor, metadata_fake: torch.Tensor, measurements: torch.Tensor, flags: torch.Tensor
) -> torch.Tensor:
    batch = metadata_real.shape[0]
    return torch.cat(
        [metadata_real, metadata_fake, measurements.reshape(batch, -1), flags.reshape(batch, -1)], dim=1
    )


class GeneratorBundle:
    """All five networks of one model plus the layout and noise source they share"""

    def __init__(self, layout: EncodingLayout, config: ModelConfig, seed: int = 0):
        self.layout = layout
        self.config = config
        self.seed = seed
        self.dtype = getattr(torch, config.dtype)
        self.step = 0
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.attr_gen = MetadataGenerator(layout, config).to(self.dtype)
            self.minmax_gen = MinMaxGenerator(layout, config).to(self.dtype)
            self.meas_gen = MeasurementGenerator(layout, config).to(self.dtype)
            self.disc_main = Critic(layout.main_input_dim, config.disc_mlp).to(self.dtype)
            self.disc_aux = Critic(layout.aux_input_dim, config.aux_disc_mlp).to(self.dtype) \
                if layout.aux_input_dim else None
        self.rng = torch.Generator().manual_seed(seed)

    @property
    def has_aux(self) -> bool:
        return self.disc_aux is not None

    def modules(self) -> Dict[str, Optional[nn.Module]]:
        return {
            "attr_gen": self.attr_gen,
            "minmax_gen": self.minmax_gen,
            "meas_gen": self.meas_gen,
            "disc_main": self.disc_main,
            "disc_aux": self.disc_aux,
        }

    def generator_parameters(self) -> Iterator[nn.Parameter]:
        for module in (self.attr_gen, self.minmax_gen, self.meas_gen):
            yield from module.parameters()

    def measurement_path_parameters(self) -> Iterator[nn.Parameter]:
        for module in (self.minmax_gen, self.meas_gen, self.disc_main):
            yield from module.parameters()

    def parameter_count(self) -> int:
        return sum(p.numel() for module in self.modules().values() if module is not None for p in module.parameters())

    def train(self, mode: bool = True) -> "GeneratorBundle":
        for module in self.modules().values():
            if module is not None:
                module.train(mode)
        return self

    def tensor(self, array) -> torch.Tensor:
        return torch.as_tensor(array, dtype=self.dtype)

    def noise(self, *shape: int, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        return torch.randn(*shape, generator=generator or self.rng, dtype=self.dtype)

    def gen_metadata(self, z_attr: torch.Tensor) -> torch.Tensor:
        return self.attr_gen(z_attr)

    def gen_minmax(self, metadata_real: torch.Tensor, z_minmax: torch.Tensor) -> torch.Tensor:
        return self.minmax_gen(metadata_real, z_minmax)

    def gen_measurements(
        self, metadata_all: torch.Tensor, z_seq: torch.Tensor, t_pad: Optional[int] = None
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        t_pad = self.layout.t_pad if t_pad is None else t_pad
        if t_pad % self.layout.batch_param != 0:
            raise ContractError(f"T_pad={t_pad} is not divisible by S={self.layout.batch_param}")
        if z_seq.shape[1] != t_pad // self.layout.batch_param:
            raise ContractError(f"z_seq carries {z_seq.shape[1]} passes, T_pad/S={t_pad // self.layout.batch_param}")
        return self.meas_gen(metadata_all, z_seq)

    def discriminate(self, main_input: torch.Tensor) -> torch.Tensor:
        return self.disc_main(main_input)

    def discriminate_aux(self, metadata_input: torch.Tensor) -> torch.Tensor:
        if self.disc_aux is None:
            raise ContractError("layout has no metadata block; the auxiliary critic is absent")
        return self.disc_aux(metadata_input)

    def generate_encoded(self, batch_size: int, generator: Optional[torch.Generator] = None):
        """Run the three generator stages; returns soft tensors with steps after the stop masked"""
        cfg = self.config
        metadata_real = self.gen_metadata(self.noise(batch_size, cfg.noise_dim, generator=generator))
        metadata_fake = self.gen_minmax(metadata_real, self.noise(batch_size, cfg.noise_dim, generator=generator))
        z_seq = self.noise(batch_size, self.layout.n_passes, cfg.noise_dim, generator=generator)
        measurements, flags = self.gen_measurements(torch.cat([metadata_real, metadata_fake], dim=1), z_seq)
        measurements, flags = mask_after_stop(measurements, flags)
        return metadata_real, metadata_fake, measurements, flags

    def real_inputs(self, batch: EncodedBatch) -> Tuple[torch.Tensor, torch.Tensor]:
        """(main, aux) critic inputs for an encoded real batch"""
        main = self.tensor(batch.main_input())
        aux = self.tensor(batch.aux_input())
        return main, aux

    def config_json(self) -> str:
        return json.dumps(self.config.model_dump(mode="json"), sort_keys=True)


def expected_parameter_count(layout: EncodingLayout, config: ModelConfig) -> int:
    """Closed-form parameter count of a GeneratorBundle"""
    total = 0
    if layout.d_a:
        total += mlp_parameter_count(config.noise_dim, config.attr_mlp, layout.d_a)
    if layout.d_fake:
        total += mlp_parameter_count(layout.d_a + config.noise_dim, config.minmax_mlp, layout.d_fake)
    total += lstm_parameter_count(layout.d_a + layout.d_fake + config.noise_dim, config.rnn_units)
    total += config.rnn_units * layout.batch_param * (layout.d_f + 2) + layout.batch_param * (layout.d_f + 2)
    total += mlp_parameter_count(layout.main_input_dim, config.disc_mlp, 1)
    if layout.aux_input_dim:
        total += mlp_parameter_count(layout.aux_input_dim, config.aux_disc_mlp, 1)
    return total
