# Optimizers, network, data and checkpoints
