# Certified accuracy against perturbation energy on the MNIST subset.
# Run with:  python notebooks/security_curve.py   (needs mlxtend for the images)

import numpy as np

from sllcert.cert_input import certify_many, security_curve
from sllcert.data import load_mnist_subset
from sllcert.train import TrainConfig, accuracy, sgd_train

data = load_mnist_subset()
data = data.subset(np.random.default_rng(0).permutation(len(data)))
train, test = data.split(4500)

#%% a 784-100-100-10 net with the orthogonal frame penalty
net = sgd_train(train, TrainConfig(arch=(100, 100), eta=0.1, steps=4000, batch=100, lr=1.0, seed=0))
print("test accuracy", accuracy(net, test))

#%% per-input radii
certs = certify_many(net, test.inputs)
rs = np.array([c.r_sparse for c in certs])
rg = np.array([c.r_global for c in certs])
print("median r_global %.4g  median r_sparse %.4g  mean ratio %.3f" % (np.median(rg), np.median(rs), np.mean(rs / rg)))

#%% the curve itself; the sparse column dominates the global one at every nu
grid = np.linspace(0, 0.02, 21)
print("nu,acc_sparse,acc_global,acc_clean")
for row in security_curve(net, test, grid, certs=certs):
    print(",".join("%.4g" % v for v in row))
