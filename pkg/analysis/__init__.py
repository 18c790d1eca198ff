# Scaling-property analyses
