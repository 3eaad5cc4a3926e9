# The differentiable core and the sampling policy on top of it:
# tape-based gradients, neighborhood encodings, a decoder, and one
# surrogate-loss update that shifts probability toward a useful neighbor.

import numpy as np

from tgadapt import autodiff as ad
from tgadapt.autodiff import Tensor
from tgadapt.params import ParamStore
from tgadapt.sampler import sample_loss_tgat, sample_without_replacement, update_sampler
from tgadapt.sampler import PolicyOutput

# --- reverse mode in a few lines ------------------------------------------
store = ParamStore(seed=0)
W = store.glorot("W", (3, 3))
x = Tensor(np.array([[1.0, 2.0, -1.0]]))
loss = ad.sum_all(ad.gelu(ad.matmul(x, W)))
ad.backward(loss)
print("dloss/dW:\n", np.round(W.grad, 3))

# finite differences agree
eps = 1e-6
W.data[0, 0] += eps
lp = ad.sum_all(ad.gelu(ad.matmul(x, W))).item()
W.data[0, 0] -= 2 * eps
lm = ad.sum_all(ad.gelu(ad.matmul(x, W))).item()
W.data[0, 0] += eps
print(f"numeric {((lp - lm) / (2 * eps)):.6f} vs analytic {W.grad[0, 0]:.6f}")

# --- a policy learning to prefer the informative neighbor ------------------
# neighborhood of four: only neighbor 1's value row matches the target
m, n = 4, 2
tau = np.ones(m)
V = -np.ones((m, 2))
V[1] = 1.0
target = np.ones(2)

pstore = ParamStore(seed=1)
theta = pstore.add("theta", np.zeros((1, m)))
rng = np.random.default_rng(3)
mask = np.ones((1, m), dtype=bool)
for step in range(150):
    pol = PolicyOutput(q=ad.softmax_masked(theta, mask),
                       log_q=ad.log_softmax_masked(theta, mask), mask=mask)
    sample_without_replacement(pol, n, rng)
    sel = pol.selected[0]
    tau_s, V_s = tau[sel][None], V[sel][None]
    h = (tau_s[0][:, None] * V_s[0]).sum(0) / tau_s.sum()
    loss = sample_loss_tgat((h - target)[None], tau_s, V_s, pol.selected_log_q)
    update_sampler(loss, pstore, lr=0.05)

q = np.exp(theta.data[0] - theta.data[0].max())
q /= q.sum()
print("\nlearned q over the four neighbors:", np.round(q, 3),
      "(neighbor 1 is the planted one)")
