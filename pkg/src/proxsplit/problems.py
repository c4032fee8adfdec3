"""Test problems: TV and Huber-TV deblurring, hinge-loss SVM, small quadratics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .operators import (
    LinearMap,
    ParameterError,
    ProxTerm,
    SmoothTerm,
    least_squares,
    matrix,
    nonneg,
    sq_norm,
)

Array = np.ndarray

DATA_DIR = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# Images


@dataclass(frozen=True)
class ImageGrid:
    width: int
    height: int
    pixels: Array  # row-major, length width * height

    def as_matrix(self) -> Array:
        return self.pixels.reshape(self.height, self.width)


def finite_difference_K(height: int, width: Optional[int] = None) -> LinearMap:
    """Vertical and horizontal forward differences with a Neumann boundary.

    Output is grouped per pixel: (vertical, horizontal) pairs, so the output
    array has shape (height, width, 2) before flattening.
    """
    width = height if width is None else width
    if height < 2 or width < 2:
        raise ParameterError("finite differences need an image of at least 2x2")
    shape = (height, width)

    def apply(x):
        im = x.reshape(shape)
        out = np.zeros((height, width, 2))
        out[:-1, :, 0] = im[1:, :] - im[:-1, :]
        out[:, :-1, 1] = im[:, 1:] - im[:, :-1]
        return out.ravel()

    def adjoint(u):
        u = u.reshape(height, width, 2)
        v, h = u[..., 0], u[..., 1]
        out = np.zeros(shape)
        out[:-1, :] -= v[:-1, :]
        out[1:, :] += v[:-1, :]
        out[:, :-1] -= h[:, :-1]
        out[:, 1:] += h[:, :-1]
        return out.ravel()

    n = height * width
    return LinearMap(n, 2 * n, apply, adjoint, 8.0, "D")


def gaussian_spectrum(height: int, width: int, sigma: float, lo: float = 0.1) -> Array:
    """Real rfft2 spectrum of a periodic Gaussian blur, clamped into [lo, 1]."""
    di = np.minimum(np.arange(height), height - np.arange(height))
    dj = np.minimum(np.arange(width), width - np.arange(width))
    g = np.exp(-(di[:, None] ** 2 + dj[None, :] ** 2) / (2 * sigma**2))
    g /= g.sum()
    s = np.fft.rfft2(g).real
    return np.clip(s, lo, 1.0)


def blur_operator(height: int, width: int, sigma: float = 1.5, mu: float = 0.01) -> LinearMap:
    """Symmetric circular convolution A with ||A|| = 1 and min singular value sqrt(mu)."""
    S = gaussian_spectrum(height, width, sigma, lo=np.sqrt(mu))
    shape = (height, width)

    def apply(x):
        return np.fft.irfft2(np.fft.rfft2(x.reshape(shape)) * S, s=shape).ravel()

    n = height * width
    return LinearMap(n, n, apply, apply, float(S.max() ** 2), "blur")


def gaussian_blur_F(y: ImageGrid, sigma: float = 1.5, mu: float = 0.01) -> SmoothTerm:
    """F(x) = 0.5 ||Ax - y||^2 with L_F = 1 and mu_F = mu."""
    A = blur_operator(y.height, y.width, sigma, mu)
    S = gaussian_spectrum(y.height, y.width, sigma, lo=np.sqrt(mu))
    F = least_squares(A, y.pixels, mu=float(S.min() ** 2))
    return SmoothTerm(F.value, F.gradient, float(S.max() ** 2), F.mu, "blur-lsq")


def synthetic_phantom(n: int) -> ImageGrid:
    """Deterministic piecewise-constant n x n image of nested ellipses, values in [0, 1]."""
    if n < 8:
        raise ParameterError("phantom size must be at least 8")
    yy, xx = np.mgrid[-1 : 1 : n * 1j, -1 : 1 : n * 1j]
    # (intensity, a, b, x0, y0, angle in degrees), a reduced Shepp-Logan style table
    ellipses = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18),
        (0.3, 0.21, 0.25, 0.0, 0.35, 0),
        (0.4, 0.046, 0.046, 0.0, 0.1, 0),
        (0.4, 0.046, 0.023, -0.08, -0.605, 0),
    ]
    im = np.zeros((n, n))
    for val, a, b, x0, y0, ang in ellipses:
        t = np.deg2rad(ang)
        xr = (xx - x0) * np.cos(t) + (yy - y0) * np.sin(t)
        yr = -(xx - x0) * np.sin(t) + (yy - y0) * np.cos(t)
        im[(xr / a) ** 2 + (yr / b) ** 2 <= 1] += val
    im = np.clip(im, 0.0, 1.0)
    return ImageGrid(n, n, im.ravel())


# ---------------------------------------------------------------------------
# Total variation terms, acting on per-pixel pairs


def _pair_norms(u: Array) -> Array:
    p = u.reshape(-1, 2)
    return np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2)


def prox_l12_conjugate(lam: float, tau: float, u: Array) -> Array:
    """Projection of each pixel pair onto the disc of radius lam; tau plays no role."""
    p = u.reshape(-1, 2)
    scale = np.maximum(_pair_norms(u) / lam, 1.0)
    return (p / scale[:, None]).ravel()


def l12(lam: float) -> ProxTerm:
    """lam * sum_p ||u_p||_2 (isotropic TV once composed with finite differences)."""
    lam = float(lam)

    def value(u):
        return lam * float(np.sum(_pair_norms(u)))

    def prox(g, z):
        p = z.reshape(-1, 2)
        r = _pair_norms(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(r > g * lam, 1.0 - g * lam / r, 0.0)
        return (p * f[:, None]).ravel()

    return ProxTerm(value, prox, conj_prox=lambda t, u: prox_l12_conjugate(lam, t, u), name="l12")


def huber(t: Array, lam: float, nu: float) -> Array:
    a = np.abs(t)
    return np.where(a <= nu, lam / (2 * nu) * a**2, lam * (a - nu / 2))


def prox_huber_conjugate(lam: float, nu: float, tau: float, t: Array) -> Array:
    """prox_{h*/tau}(t) = t / max(|t| / lam, 1 + nu / (lam tau)), for scalars."""
    return t / np.maximum(np.abs(t) / lam, 1 + nu / (lam * tau))


def huber_tv(lam: float, nu: float) -> ProxTerm:
    """sum_p h(||u_p||) with h the Huber function; smooth with L = lam / nu."""
    lam, nu = float(lam), float(nu)

    def value(u):
        return float(np.sum(huber(_pair_norms(u), lam, nu)))

    def prox(g, z):
        p = z.reshape(-1, 2)
        r = _pair_norms(z)
        knee = nu + g * lam
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(r <= knee, 1.0 / (1.0 + g * lam / nu), (r - g * lam) / r)
        return (p * f[:, None]).ravel()

    def conj_prox(tau, u):
        p = u.reshape(-1, 2)
        d = np.maximum(_pair_norms(u) / lam, 1 + nu / (lam * tau))
        return (p / d[:, None]).ravel()

    def gradient(u):
        p = u.reshape(-1, 2)
        return (lam * p / np.maximum(_pair_norms(u), nu)[:, None]).ravel()

    return ProxTerm(value, prox, smooth_L=lam / nu, conj_prox=conj_prox, gradient=gradient, name="huber-tv")


def prox_nonneg(gamma: float, z: Array) -> Array:
    return np.maximum(z, 0.0)


def prox_scaled_sq_norm(alpha: float, gamma: float, x: Array) -> Array:
    return x / (1 + gamma * alpha)


# ---------------------------------------------------------------------------
# Hinge loss


def prox_hinge(a: Array, b: float, gamma: float, x: Array) -> Array:
    eta_m = float(a @ a)
    return x - (b / eta_m) * max(min(b * float(a @ x) - 1.0, 0.0), -eta_m * gamma) * a


def hinge(a: Array, b: float) -> ProxTerm:
    """max(1 - b a'x, 0)."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ParameterError("hinge loss needs a nonzero sample vector")
    b = float(b)
    return ProxTerm(
        lambda x: max(1.0 - b * float(a @ x), 0.0),
        lambda g, x: prox_hinge(a, b, g, x),
        name="hinge",
    )


# ---------------------------------------------------------------------------
# Data files


@dataclass(frozen=True)
class SvmDataset:
    A: Array  # (M, d) samples
    b: Array  # (M,) labels in {-1, +1}

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


class LibsvmParseError(ValueError):
    pass


def load_libsvm(path, d: Optional[int] = None) -> SvmDataset:
    """Read a LibSVM sparse text file into dense arrays; labels {0,1} map to {-1,+1}."""
    rows, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                lab = float(tok[0])
                feats = {}
                for t in tok[1:]:
                    i, v = t.split(":")
                    i = int(i)
                    if i < 1:
                        raise ValueError("feature index must be >= 1")
                    feats[i] = float(v)
            except ValueError as e:
                raise LibsvmParseError(f"{path}:{lineno}: {e}") from None
            rows.append(feats)
            labels.append(lab)
    if not rows:
        raise LibsvmParseError(f"{path}: no samples")
    labels = np.array(labels)
    if set(np.unique(labels)) <= {0.0, 1.0}:
        labels = 2 * labels - 1
    if not set(np.unique(labels)) <= {-1.0, 1.0}:
        raise LibsvmParseError(f"{path}: labels must be in {{-1, +1}} or {{0, 1}}")
    dim = max((max(r) for r in rows if r), default=0)
    dim = dim if d is None else max(d, dim)
    A = np.zeros((len(rows), dim))
    for m, feats in enumerate(rows):
        for i, v in feats.items():
            A[m, i - 1] = v
    return SvmDataset(A, labels)


def write_libsvm(path, data: SvmDataset) -> None:
    with open(path, "w") as fh:
        for a, lab in zip(data.A, data.b):
            feats = " ".join(f"{i + 1}:{v:.6g}" for i, v in enumerate(a) if v != 0)
            fh.write(f"{int(lab):+d} {feats}\n")


def toy_svm_dataset() -> SvmDataset:
    return load_libsvm(DATA_DIR / "svm_toy.libsvm")


def make_toy_svm(M: int = 100, d: int = 10, seed: int = 0) -> SvmDataset:
    """Linearly nonseparable samples: labels from a noisy linear rule."""
    rng = np.random.default_rng(seed)
    A = np.round(rng.standard_normal((M, d)), 4)
    A[:, -1] = 1.0  # bias feature, keeps every sample nonzero
    w = rng.standard_normal(d)
    b = np.sign(A @ w + 0.8 * rng.standard_normal(M))
    b[b == 0] = 1
    return SvmDataset(A, b)


def write_pgm(path, im: ImageGrid, binary: bool = False) -> None:
    """Write pixel values in [0, 1] as an 8-bit PGM (P2 ascii or P5 binary)."""
    px = np.clip(np.round(im.as_matrix() * 255), 0, 255).astype(np.uint8)
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{im.width} {im.height}\n255\n".encode())
            fh.write(px.tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(f"P2\n{im.width} {im.height}\n255\n")
            for row in px:
                fh.write(" ".join(map(str, row)) + "\n")


def read_pgm(path) -> ImageGrid:
    raw = Path(path).read_bytes()
    magic = raw[:2]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a P2/P5 PGM file")
    # header tokens, skipping comments
    tokens, pos = [], 2
    while len(tokens) < 3:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(raw[start:pos]))
    w, h, maxval = tokens
    if magic == b"P5":
        px = np.frombuffer(raw[pos + 1 : pos + 1 + w * h], dtype=np.uint8).astype(float)
    else:
        px = np.array(raw[pos:].split(), dtype=float)[: w * h]
    return ImageGrid(w, h, px / maxval)


def write_csv_matrix(path, im: ImageGrid) -> None:
    np.savetxt(path, im.as_matrix(), delimiter=",", fmt="%.17g")


def read_csv_matrix(path) -> ImageGrid:
    m = np.atleast_2d(np.loadtxt(path, delimiter=","))
    return ImageGrid(m.shape[1], m.shape[0], m.ravel())


# ---------------------------------------------------------------------------
# Problem builders


@dataclass
class DeblurProblem:
    x_true: ImageGrid
    y: ImageGrid
    F: SmoothTerm
    R: ProxTerm
    H: Optional[ProxTerm]
    K: Optional[LinearMap]
    eta: float

    def bundle(self, eta: Optional[float] = None):
        from .solvers import TermBundle

        return TermBundle(self.y.pixels.size, F=self.F, R=self.R, H=self.H, K=self.K,
                          eta=self.eta if eta is None else eta)


def deblur_problem(
    n: int = 64,
    regularizer: str = "tv",
    lam: float = 0.6,
    nu: float = 0.1,
    noise: float = 0.01,
    seed: int = 0,
    blur_sigma: float = 1.5,
    mu: float = 0.01,
    eta: float = 8.0,
    peak: float = 1.0,
) -> DeblurProblem:
    """Blurred noisy phantom with nonnegativity and a TV-type regularizer.

    ``regularizer`` is "tv" (lam ||.||_{1,2}), "huber" or "none" (H = 0).
    ``peak`` is the maximum intensity of the phantom; ``noise`` is relative to it.
    """
    x_true = synthetic_phantom(n)
    x_true = ImageGrid(n, n, peak * x_true.pixels)
    A = blur_operator(n, n, blur_sigma, mu)
    rng = np.random.default_rng(seed)
    y = ImageGrid(n, n, A.apply(x_true.pixels) + peak * noise * rng.standard_normal(n * n))
    F = gaussian_blur_F(y, blur_sigma, mu)
    if regularizer == "tv":
        H, K = l12(lam), finite_difference_K(n, n)
    elif regularizer == "huber":
        H, K = huber_tv(lam, nu), finite_difference_K(n, n)
    elif regularizer == "none":
        H, K = None, None
    else:
        raise ParameterError(f"unknown regularizer {regularizer!r}")
    return DeblurProblem(x_true, y, F, nonneg(), H, K, eta if K is not None else 1.0)


def svm_nodes(data: SvmDataset):
    """One node per sample, H_m = hinge loss of that sample, K_m = I, F_m = 0."""
    from .distributed import NodeSpec

    return [NodeSpec(H=hinge(a, b)) for a, b in zip(data.A, data.b)]


def svm_regularizer(alpha: float) -> ProxTerm:
    return sq_norm(alpha)


def hinge_sum(scale: float = 1.0) -> ProxTerm:
    """t -> scale * sum_m max(1 - t_m, 0), separable in the margins t."""
    c = float(scale)

    def prox(g, z):
        return np.where(z >= 1.0, z, np.where(z < 1.0 - g * c, z + g * c, 1.0))

    return ProxTerm(lambda t: c * float(np.sum(np.maximum(1.0 - t, 0.0))), prox, name="hinge-sum")


def svm_bundle(data: SvmDataset, alpha: float):
    """The SVM objective as one sequential problem: K stacks the rows b_m a_m."""
    from .solvers import TermBundle

    K = matrix(data.b[:, None] * data.A)
    return TermBundle(data.d, R=svm_regularizer(alpha), H=hinge_sum(1.0 / data.M), K=K)


def svm_polish(data: SvmDataset, alpha: float, x: Array, tol: float = 1e-6) -> Optional[Array]:
    """Exact minimizer from the margin pattern of an approximate solution ``x``.

    Samples are split into margin < 1, = 1 (within ``tol``) and > 1; the
    optimality conditions then form a linear system. Returns None when the
    recovered multipliers leave [0, 1] or the solution does not reproduce
    the assumed pattern, i.e. the pattern was wrong.
    """
    Z = data.b[:, None] * data.A
    M = data.M
    t = Z @ x
    on = np.abs(t - 1.0) <= tol
    inside = (t < 1.0) & ~on
    # x = (1/(alpha M)) (sum_inside z_m + sum_on beta_m z_m),  z_m'x = 1 on the margin
    base = Z[inside].sum(axis=0) / (alpha * M)
    E = Z[on]
    if E.shape[0] == 0:
        x_new = base
    else:
        G = E @ E.T / (alpha * M)
        try:
            beta = np.linalg.solve(G, 1.0 - E @ base)
        except np.linalg.LinAlgError:
            return None
        if np.any(beta < -1e-9) or np.any(beta > 1 + 1e-9):
            return None
        x_new = base + E.T @ beta / (alpha * M)
    t_new = Z @ x_new
    if np.any(t_new[inside] > 1.0 + 1e-12) or np.any(t_new[~inside & ~on] < 1.0 - 1e-12):
        return None
    return x_new
