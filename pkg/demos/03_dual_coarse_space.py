"""
The dual preconditioner and its coarse space
============================================

The Schur complement approximation ``M_S = S0 + S1`` is built from the
primal preconditioner. ``S1`` is a sum of local PSD blocks ``T_i``; a second
spectral coarse space makes the two-level preconditioner of ``S1`` spectrally
equivalent to it with constant ``alpha = max(1, k0 / tau_S1)``.
"""
from saddledd.checks import check_MS_paths, check_stable_decomposition, dual_spectrum
from saddledd.decomposition import decompose
from saddledd.schur import alpha_bound, build_dual_state
from saddledd.problems import ProblemSpec, generate
from saddledd.schwarz import build_primal_precond

sys = generate(ProblemSpec("mixed_darcy_mac", 16, 16))
dec = decompose(sys, 4, overlap=1)
MA = build_primal_precond(sys, dec, tau_A=0.5)

# without a coarse space the spectrum is bounded by k0
st = build_dual_state(sys, dec, MA, tau_S1=0.0)
w = dual_spectrum(st)
print(f"one level: lambda in [{w[0]:.3f}, {w[-1]:.3f}], k0 = {dec.k0}")

for tau in (dec.k0 / 4, dec.k0 / 2, float(dec.k0)):
    st = build_dual_state(sys, dec, MA, tau_S1=tau)
    w = dual_spectrum(st)
    print(f"tau_S1 = {tau:4.1f}: dim W0 = {st.coarse.dim:3d}, "
          f"lambda in [{w[0]:.3f}, {w[-1]:.3f}], alpha = {alpha_bound(dec.k0, tau):.2f}")

# two consistency checks on the last state
print(check_MS_paths(st, probes=20).line())
print(check_stable_decomposition(st, vectors=20).line())
