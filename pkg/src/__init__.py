# Primal/Dual Homogenization Toolkit
