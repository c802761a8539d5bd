"""Heat equation with absorption: forward map, priors, sampler and semiparametric information."""
