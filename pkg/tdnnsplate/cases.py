import logging
from abc import ABCMeta, abstractmethod

from tdnnsplate.assembly import BCSpec, LoadSpec
from tdnnsplate.fespace import MAX_ORDER
from tdnnsplate.material import MaterialParams
from tdnnsplate.mesh import load_mesh, plate_with_hole_mesh, refine_uniform, unit_square_mesh
from tdnnsplate.postprocess import ClampedSquareSolution

logger = logging.getLogger(__name__)

SOLVERS = ("direct", "cg")


class RunConfig(object):
    """
    Parameters of a solve or of a convergence study.

    Custom values override the defaults of :meth:`get_default_params`; unknown keys
    are rejected.

    Attributes
    ----------
    custom_params : dict
        dictionary with custom params
    params : dict
        defaults overridden by the custom params
    """

    def __init__(self, custom_params=None):
        self.custom_params = dict(custom_params) if custom_params is not None else {}
        unknown = sorted(set(self.custom_params) - set(self.get_default_params()))
        if unknown:
            raise ValueError("Unknown configuration keys {}".format(unknown))
        self.params = self.get_params()
        self.validate()

    @staticmethod
    def get_default_params():
        default_params = {
            "case": "clamped-square",
            "order": 1,
            "thickness": None,
            "levels": 4,
            "n0": 4,
            "mesh": None,
            "segments": 16,
            "graded_levels": 0,
            "traction": 0.1,
            "load": None,
            "solver": "direct",
            "tol": 1e-10,
            "hybrid": True,
            "csv": None,
            "export": None,
            "threads": 1,
        }
        return default_params

    def get_params(self):
        params = {}
        default_params = self.get_default_params()
        for k in default_params.keys():
            if k in self.custom_params:
                params[k] = self.custom_params[k]
            else:
                params[k] = default_params[k]
        return params

    def validate(self):
        p = self.params
        if int(p["order"]) != p["order"] or not 1 <= p["order"] <= MAX_ORDER:
            raise ValueError("Order must be an integer in [1, {}], got {}".format(MAX_ORDER, p["order"]))
        if p["thickness"] is not None and p["thickness"] <= 0:
            raise ValueError("Thickness must be positive, got {}".format(p["thickness"]))
        if int(p["levels"]) != p["levels"] or p["levels"] < 1:
            raise ValueError("levels must be a positive integer, got {}".format(p["levels"]))
        if int(p["n0"]) != p["n0"] or p["n0"] < 1:
            raise ValueError("n0 must be a positive integer, got {}".format(p["n0"]))
        if p["solver"] not in SOLVERS:
            raise ValueError("Solver must be one of {}, got '{}'".format(SOLVERS, p["solver"]))
        if p["tol"] <= 0:
            raise ValueError("Tolerance must be positive, got {}".format(p["tol"]))
        if int(p["threads"]) != p["threads"] or p["threads"] < 1:
            raise ValueError("threads must be a positive integer, got {}".format(p["threads"]))
        if p["case"] == CustomMeshCase.name and not p["mesh"]:
            raise ValueError("The custom case needs a mesh file")

    def __getitem__(self, key):
        return self.params[key]

    def __repr__(self):
        return "RunConfig({})".format(self.params)


class BaseCase(object, metaclass=ABCMeta):
    """
    Base class of a plate problem: geometry, material, boundary conditions and load.

    Subclasses set ``name`` and are found by :func:`get_case` through
    :meth:`get_subclasses`.
    """

    name = None
    default_thickness = 1.0

    def __init__(self, config=None):
        self.config = config if config is not None else RunConfig({"case": self.name})

    @staticmethod
    def get_subclasses(my_class):
        """All (direct and indirect) subclasses of ``my_class``."""
        subclasses = my_class.__subclasses__()
        if len(subclasses) == 0:
            return []
        next_subclasses = []
        [next_subclasses.extend(BaseCase.get_subclasses(x)) for x in subclasses]
        return [*subclasses, *next_subclasses]

    @property
    def thickness(self):
        t = self.config["thickness"]
        return self.default_thickness if t is None else t

    @abstractmethod
    def base_mesh(self):
        """Coarsest mesh of the case."""

    def meshes(self, levels=None):
        """
        Mesh hierarchy of a convergence study; each level halves the mesh size.

        The default hierarchy refines :meth:`base_mesh` uniformly, so level l + 1 is
        nested in level l.
        """
        levels = self.config["levels"] if levels is None else levels
        hierarchy = [self.base_mesh()]
        for _ in range(levels - 1):
            hierarchy.append(refine_uniform(hierarchy[-1]))
        return hierarchy

    @abstractmethod
    def material(self):
        """MaterialParams of the case at its thickness."""

    @abstractmethod
    def bc(self, mesh):
        """BCSpec of the case on ``mesh``."""

    def load(self):
        return LoadSpec()

    def exact(self):
        """ExactSolution of the case, None when unknown."""
        return None

    def __repr__(self):
        return "{}(t={})".format(type(self).__name__, self.thickness)


class ClampedSquareCase(BaseCase):
    """
    Clamped unit square with the polynomial reference solution (E = 12, nu = 0).

    Level l is the structured mesh with n0 2^l subdivisions per side.
    """

    name = "clamped-square"
    default_thickness = 1e-3

    def base_mesh(self):
        return unit_square_mesh(self.config["n0"])

    def meshes(self, levels=None):
        levels = self.config["levels"] if levels is None else levels
        return [unit_square_mesh(self.config["n0"] * 2 ** level) for level in range(levels)]

    def material(self):
        return MaterialParams(E=12.0, nu=0.0, k_s=5.0 / 6.0, t=self.thickness)

    def bc(self, mesh):
        return BCSpec().clamp(1)

    def load(self):
        return LoadSpec(self.exact().g)

    def exact(self):
        return ClampedSquareSolution(self.thickness)


class PlateWithHoleCase(BaseCase):
    """
    Steel plate 100 x 100 with a centred hole of diameter 30.

    The left edge is clamped; the other edges and the hole are free, the right edge
    carries the edge shear traction (y - 50).
    """

    name = "plate-with-hole"

    def base_mesh(self):
        return plate_with_hole_mesh(segments=self.config["segments"],
                                    graded_levels=self.config["graded_levels"])

    def material(self):
        return MaterialParams(E=2.1e5, nu=0.3, k_s=5.0 / 6.0, t=self.thickness)

    def bc(self, mesh):
        traction = float(self.config["traction"])
        bc = BCSpec().clamp(1)
        bc.free(2, shear=lambda x, y: traction * (y - 50.0))
        bc.free(3)
        bc.free(4)
        return bc

    def load(self):
        if self.config["load"]:
            return LoadSpec.constant(self.config["load"])
        return LoadSpec()


class CustomMeshCase(BaseCase):
    """
    Mesh read from a file, clamped on every boundary marker under a constant load
    (1 unless configured). Material as the clamped square, thickness 0.1 by default.
    """

    name = "custom"
    default_thickness = 0.1

    def base_mesh(self):
        mesh = load_mesh(self.config["mesh"])
        logger.info("Loaded {} from {}".format(mesh, self.config["mesh"]))
        return mesh

    def material(self):
        return MaterialParams(E=12.0, nu=0.0, k_s=5.0 / 6.0, t=self.thickness)

    def bc(self, mesh):
        bc = BCSpec()
        for marker in mesh.markers.tolist():
            bc.clamp(marker)
        return bc

    def load(self):
        value = self.config["load"]
        return LoadSpec.constant(1.0 if value is None else value)


def get_case(config):
    """
    Instantiates the case named by ``config['case']``.

    Parameters
    ----------
    config : RunConfig

    Returns
    -------
    case : BaseCase
    """
    cases = {cls.name: cls for cls in BaseCase.get_subclasses(BaseCase) if cls.name}
    name = config["case"]
    if name not in cases:
        raise ValueError("Unknown case '{}', choose one of {}".format(name, sorted(cases)))
    return cases[name](config)
