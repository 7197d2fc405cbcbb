"""Physical constants (CODATA 2018, exact SI values where defined)."""

K_B_EV = 8.617333262e-5  # Boltzmann constant, eV/K
E_CHARGE = 1.602176634e-19  # elementary charge, C
SECONDS_PER_HOUR = 3600.0
HOURS_PER_YEAR = 8766.0  # Julian year
