"""Monte Carlo harness: scenarios, batched trial engine, metrics, CSV and figure output."""
