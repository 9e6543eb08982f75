"""Reference values for the frozen forward-pass and optimizer tests.

Independent numpy re-derivation of the model maths on a tiny hand-written
parameter set; run it and paste the printed numbers into the C++ tests.
"""
import numpy as np

np.set_printoptions(precision=17)

T = np.array([[0.5, -1.0, 2.0],
              [1.5, 0.0, -0.5],
              [-0.2, 0.3, 0.8]])
gamma = np.array([1.0, 0.5, 2.0])
beta = np.array([0.0, 0.1, -0.1])
run_mean = np.array([0.1, -0.2, 0.3])
run_var = np.array([1.5, 0.5, 2.0])
W = np.array([[0.2, -0.3], [0.4, 0.1], [-0.5, 0.6]])
b = np.array([0.05, -0.05])
V = np.array([[0.3, -0.2], [0.1, 0.4]])
U = np.array([[-0.6, 0.2], [0.5, 0.3]])
w = np.array([0.7, -0.4])
cw = np.array([0.9, -1.1])
cb = 0.2
eps = 1e-5


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def sa(A, threshold, factor):
    span = A.max() - A.min()
    norm = (A - A.min()) / span if span > 0 else np.zeros_like(A)
    mask = (norm - threshold >= 0).astype(float)
    return softmax(A * ((1 - mask) + factor * mask)), norm, mask


def forward_full(mode, threshold=0.5, factor=0.5):
    if mode == "train":
        mu, var = T.mean(0), T.var(0)
    else:
        mu, var = run_mean, run_var
    Z = (T - mu) / np.sqrt(var + eps) * gamma + beta
    H = np.maximum(Z @ W + b, 0.0)
    A = (np.tanh(H @ V.T) * sigmoid(H @ U.T)) @ w
    weights, norm, mask = sa(A, threshold, factor)
    z = weights @ H
    p = sigmoid(z @ cw + cb)
    return H, A, norm, mask, weights, p


for mode in ("train", "eval"):
    H, A, norm, mask, weights, p = forward_full(mode)
    print(mode, "H", H.ravel().tolist())
    print(mode, "A", A.tolist())
    print(mode, "mask", mask.tolist())
    print(mode, "weights", weights.tolist())
    print(mode, "p", repr(p))
    print(mode, "loss(y=1)", repr(-np.log(p)))

# meanpool / maxpool baselines in eval mode
H = forward_full("eval")[0]
print("meanpool p", repr(sigmoid(H.mean(0) @ cw + cb)))
print("maxpool p", repr(sigmoid(H.max(0) @ cw + cb)))

# running statistics after one train-mode bag, momentum 0.1
mu, var_unbiased = T.mean(0), T.var(0, ddof=1)
print("running_mean", (0.9 * run_mean + 0.1 * mu).tolist())
print("running_var", (0.9 * run_var + 0.1 * var_unbiased).tolist())

# optimizer steps on theta with a fixed gradient sequence
theta0 = np.array([0.5, -0.3])
grads = [np.array([0.1, -0.2]), np.array([0.05, 0.3]), np.array([-0.4, 0.1])]
lr, wd, b1, b2, e = 1e-2, 1e-2, 0.9, 0.999, 1e-8


def adam(theta, decay=True):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        if decay:
            theta = theta - lr * wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + e)
    return theta


print("adam", adam(theta0).tolist())
print("adam no decay", adam(theta0, decay=False).tolist())


def radam_lookahead(theta, steps, k=2, alpha=0.5):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    slow = theta.copy()
    rho_inf = 2 / (1 - b2) - 1
    for t in range(1, steps + 1):
        g = grads[(t - 1) % len(grads)]
        theta = theta - lr * wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        rho = rho_inf - 2 * t * b2 ** t / (1 - b2 ** t)
        if rho > 4:
            vhat = np.sqrt(v / (1 - b2 ** t))
            r = np.sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho))
            theta = theta - lr * r * mhat / (vhat + e)
        else:
            theta = theta - lr * mhat
        if t % k == 0:
            slow = slow + alpha * (theta - slow)
            theta = slow.copy()
    return theta


print("ranger k2 x7", radam_lookahead(theta0, 7).tolist())
print("ranger k2 x12", radam_lookahead(theta0, 12).tolist())
