import numpy as np


class MaterialParams(object):
    """
    Constitutive data of a homogeneous isotropic plate.

    Attributes
    ----------
    E : float
        Young's modulus
    nu : float
        Poisson ratio, 0 <= nu < 0.5
    k_s : float
        Shear correction factor
    t : float
        Thickness; zero is stored but rejected by the solves
    """

    def __init__(self, E, nu, k_s=5.0 / 6.0, t=1.0):
        if E <= 0:
            raise ValueError("Young's modulus must be positive, got {}".format(E))
        if not 0 <= nu < 0.5:
            raise ValueError("Poisson ratio must satisfy 0 <= nu < 0.5, got {}".format(nu))
        if k_s <= 0:
            raise ValueError("Shear correction factor must be positive, got {}".format(k_s))
        if t < 0:
            raise ValueError("Thickness must be non negative, got {}".format(t))
        self.E = float(E)
        self.nu = float(nu)
        self.k_s = float(k_s)
        self.t = float(t)

    def with_thickness(self, t):
        return MaterialParams(self.E, self.nu, self.k_s, t)

    def __eq__(self, other):
        return (isinstance(other, MaterialParams) and
                (self.E, self.nu, self.k_s, self.t) == (other.E, other.nu, other.k_s, other.t))

    def __repr__(self):
        return "MaterialParams(E={}, nu={}, k_s={}, t={})".format(self.E, self.nu, self.k_s, self.t)


class BendingTensors(object):
    """
    Bending moduli in Voigt form.

    Strains are stored as (eps_xx, eps_yy, 2 eps_xy) and moments as (M_xx, M_yy, M_xy),
    so ``C @ strain`` gives the moment and ``A @ moment`` the strain.

    Attributes
    ----------
    C : np.ndarray
        (3, 3) bending moduli
    A : np.ndarray
        (3, 3) compliance, the inverse of C
    mu : float
        Shear modulus k_s E / (2 (1 + nu))
    t : float
        Thickness the shear factor is evaluated for
    """

    def __init__(self, C, A, mu, t):
        self.C = C
        self.A = A
        self.mu = mu
        self.t = t
        self.C.setflags(write=False)
        self.A.setflags(write=False)

    @property
    def shear_factor(self):
        """Factor mu t^-2 of the shear term."""
        if self.t <= 0:
            raise ValueError("The shear term needs a positive thickness, got t={}".format(self.t))
        return self.mu / self.t ** 2

    def moment(self, strain):
        """Moments (..., 3) from Voigt strains (..., 3)."""
        return np.asarray(strain) @ self.C.T

    def compliance(self, moment):
        """Voigt strains (..., 3) from moments (..., 3)."""
        return np.asarray(moment) @ self.A.T


def derive_tensors(params):
    """
    Derives the bending moduli, compliance and shear modulus of ``params``.

    Parameters
    ----------
    params : MaterialParams

    Returns
    -------
    tensors : BendingTensors
    """
    E, nu = params.E, params.nu
    if nu >= 0.5:
        raise ValueError("Compliance is singular for nu >= 0.5, got {}".format(nu))
    C = E / (12.0 * (1.0 - nu ** 2)) * np.array([[1.0, nu, 0.0],
                                                  [nu, 1.0, 0.0],
                                                  [0.0, 0.0, 0.5 * (1.0 - nu)]])
    A = 12.0 / E * np.array([[1.0, -nu, 0.0],
                             [-nu, 1.0, 0.0],
                             [0.0, 0.0, 2.0 * (1.0 + nu)]])
    mu = params.k_s * E / (2.0 * (1.0 + nu))
    return BendingTensors(C, A, mu, params.t)


def voigt_to_tensor(values):
    """Full (..., 2, 2) tensors from Voigt moments (xx, yy, xy)."""
    values = np.asarray(values)
    out = np.empty(values.shape[:-1] + (2, 2))
    out[..., 0, 0] = values[..., 0]
    out[..., 1, 1] = values[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = values[..., 2]
    return out
