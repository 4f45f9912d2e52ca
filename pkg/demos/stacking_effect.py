"""Off-state leakage of series transistor stacks.

Two off devices in series leak far less than one: the shared node floats up a
few thermal voltages, which turns the upper device's gate-source voltage
negative and lowers its drain-source voltage, so DIBL helps less.
"""

import numpy as np

from stacksim.devices import DEFAULT_NMOS, DEFAULT_PMOS, stack_leakage

# %% Leakage versus stack depth at a fixed supply
for card in (DEFAULT_NMOS, DEFAULT_PMOS):
    single = stack_leakage(card, 1, 1.2)[0]
    print(f"{card.polarity} stacks at 1.2 V")
    for n in (1, 2, 3, 4):
        leak, mids = stack_leakage(card, n, 1.2)
        nodes = ", ".join(f"{v * 1e3:.1f}" for v in mids) or "none"
        print(f"  n={n}: {leak:.3e} A  ratio {leak / single:.4f}  mid nodes [mV]: {nodes}")

# %% A stack across twice the supply, which is what the stacked pair sees
vdd = np.array([0.6, 0.9, 1.2, 1.5])
one = np.array([stack_leakage(DEFAULT_NMOS, 1, v)[0] for v in vdd])
two = np.array([stack_leakage(DEFAULT_NMOS, 2, 2 * v)[0] for v in vdd])
print("\nvdd   I1(vdd)     I2(2 vdd)   2*I1/I2")
for v, a, b in zip(vdd, one, two):
    print(f"{v:.1f}  {a:.3e}  {b:.3e}  {2 * a / b:.2f}")
