# Experiment configuration
