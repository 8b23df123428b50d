import numpy as np


class Adam:
    """Adam with bias correction; zeroes parameter gradients after each step.

    Moments live in ``self.m`` / ``self.v`` keyed by parameter position, so
    the state can be saved and restored alongside the parameter list.
    """

    def __init__(self, params, lr: float = 5e-4, betas=(0.5, 0.999), eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.params = list(params)
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def _clip_scale(self):
        if self.clip_norm is None:
            return 1.0
        total = np.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64)))
                            for p in self.params if p.grad is not None))
        return min(1.0, self.clip_norm / (total + 1e-12))

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        scale = self._clip_scale()
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad if scale == 1.0 else p.grad * scale
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            upd = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            # parameters are replaced, never mutated, so graphs holding the old array stay valid
            p.data = (p.data - upd).astype(p.data.dtype, copy=False)
        self.zero_grad()

    def state_arrays(self, names):
        """Flatten moments into ``{name.m, name.v, adam.step}`` for checkpointing."""
        out = {}
        for name, m, v in zip(names, self.m, self.v):
            out[f"{name}.m"] = m
            out[f"{name}.v"] = v
        out["adam.step"] = np.array([self.t], dtype=np.float32)
        out["adam.config"] = np.array([self.lr, self.beta1, self.beta2, self.eps], dtype=np.float32)
        return out

    def load_state_arrays(self, names, arrays):
        for i, name in enumerate(names):
            self.m[i] = arrays[f"{name}.m"].astype(self.params[i].dtype).reshape(self.params[i].shape)
            self.v[i] = arrays[f"{name}.v"].astype(self.params[i].dtype).reshape(self.params[i].shape)
        self.t = int(arrays["adam.step"][0])
