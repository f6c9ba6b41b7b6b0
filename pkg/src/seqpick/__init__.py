"""Sequential picking learning stack.

Subpackages:
    tabular     -- exact finite MDPs and discounted visitation distributions
    divergence  -- f-divergence calculators and bound certification
    env         -- grid-wall depalletizing simulator and scripted expert
    datasets    -- trajectory dataset binary format
    nn          -- small differentiable networks with explicit backprop
    agents      -- behavioral cloning and Double DQL trainers
    ursfo       -- LSGAN discriminator reward shaping
    cli         -- command-line harness
"""

__version__ = "0.1.0"
