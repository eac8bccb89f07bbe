F = 96485.33212  # C/mol
R = 8.314462618  # J/(mol K)
T_ZERO_C = 273.15
