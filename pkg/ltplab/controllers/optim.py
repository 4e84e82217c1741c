from typing import Iterable

import numpy as np

from ltplab.controllers.autodiff import Tensor
from ltplab.core.errors import GradientError

# Adam-family moments as in RoBERTa fine-tuning; the exact values are not
# published, these are the adopted defaults.
DEFAULT_BETAS = (0.9, 0.98)
DEFAULT_EPS = 1e-6
DEFAULT_WEIGHT_DECAY = 0.01


class Adam:
    """
    Adam with bias correction and decoupled weight decay.

    ``step`` reads gradients without clearing them; call ``zero_grad``
    between steps.
    """

    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = DEFAULT_BETAS,
        eps: float = DEFAULT_EPS,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = {
            id(p): {"step": 0, "m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            for p in self.params
        }

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise GradientError(f"adam_step: parameter '{p.name or repr(p)}' has no gradient")

        beta1, beta2 = self.betas
        for p in self.params:
            state = self.state[id(p)]
            state["step"] += 1
            t = state["step"]

            state["m"] = beta1 * state["m"] + (1.0 - beta1) * p.grad
            state["v"] = beta2 * state["v"] + (1.0 - beta2) * p.grad ** 2

            m_hat = state["m"] / (1.0 - beta1 ** t)
            v_hat = state["v"] / (1.0 - beta2 ** t)

            p.data -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
