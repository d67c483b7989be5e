# Robust sparse regularity versus width, and how many neurons a small noise flips.
# Run with:  python notebooks/regularity_and_activity.py

import numpy as np

from sllcert.data import load_mnist_subset
from sllcert.param_sll import auto_epsilon, constraints_from_network, robust_sparse_regularity
from sllcert.train import TrainConfig, activity_report, sgd_train

data = load_mnist_subset()
data = data.subset(np.random.default_rng(0).permutation(len(data)))
train, test = data.split(4500)
V = test.subset(slice(0, 200))

#%% regularity ratio L_rob / L_global for zero-bias one-hidden-layer nets
# the ratio leaves 1 only for very small nu, so the grid is fine near 0
nus = list(np.round(np.arange(0, 0.1001, 0.005), 3)) + [0.2, 0.5, 1.0]
eps = auto_epsilon(len(V), 1)
for width in (50, 100, 200):
    net = sgd_train(train, TrainConfig(arch=(width,), eta=0.1, steps=3000, lr=1.0, bias=False))
    C = constraints_from_network(net)
    res = [robust_sparse_regularity(net, V, eps, nu, C) for nu in nus]
    print("width", width)
    for nu, r in zip(nus, res):
        print("  nu=%-6g ratio=%.4f  s*/d=%.3f" % (nu, r.ratio, r.s_star[1] / width))

#%% activity: fraction of active neurons and flips under random noise
net = sgd_train(train, TrainConfig(arch=(100, 100), eta=0.1, steps=4000, batch=100, lr=1.0))
rep = activity_report(net, test, [0.05, 0.1, 0.2], n_dirs=20, seed=0)
print("median active fraction per layer", rep.median_active_fraction())
print("mean flips at nu 0.05, 0.1, 0.2", rep.mean_flips())
