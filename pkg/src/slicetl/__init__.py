"""Multi-cell network-slicing resource partitioning with per-cell TD3
agents, VAE-based inter-agent similarity analysis, and integrated
model+instance transfer learning."""

__version__ = "0.1.0"
