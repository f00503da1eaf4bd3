"""Safe RL benchmark: CMDP environments and trust-region safe policy optimizers."""
