# Baseline generators and predictors
