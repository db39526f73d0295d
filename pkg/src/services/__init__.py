"""Services: uGMM layers, networks, training, data, checkpoints, audits and exports."""
