"""Hold leakage per stored bit: conventional column versus stacked pairs.

The pair draws one cell's current from twice the supply, so at the cell level
the two architectures dissipate the same power per bit.  The difference in the
column comes from bit-line leakage through the precharge paths, which depends
on the stored data.
"""

from stacksim.builders import CellConfig
from stacksim.power import compare_leakage

cfg = CellConfig()

# %% Default comparison: two bits, all zeros
report = compare_leakage(cfg)
for side in (report.conventional, report.proposed):
    supplies = ", ".join(f"{s.name} {s.power:.4e} W" for s in side.supplies)
    print(f"{side.arch:<12} {side.per_bit:.4e} W/bit  ({supplies})")
print(f"ratio {report.ratio:.4f}, savings {report.savings_percent:.2f} %")

# %% Data dependence and column height
print("\nbits      ratio")
for bits in ([0, 0], [0, 1], [1, 1], [0, 0, 0, 0], [0, 1, 0, 1], [1, 1, 0, 0]):
    r = compare_leakage(cfg, n_bits=len(bits), init_bits=bits)
    print(f"{''.join(map(str, bits)):<8}  {r.ratio:.4f}")

# %% Supply sweep
print("\nvdd   ratio")
for vdd in (0.9, 1.0, 1.2):
    print(f"{vdd:.1f}   {compare_leakage(CellConfig(vdd=vdd)).ratio:.4f}")
