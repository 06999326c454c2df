import numpy as np

from crupwind.output import read_vtk_cell_data, write_vtk
from crupwind.runner import initial_state
from crupwind.solutions import builtin_solutions


def test_vtk_cells_and_data(tmp_path, cube2):
    state = initial_state(builtin_solutions()["pulse"], cube2)
    cells, faces = write_vtk(state, cube2, tmp_path / "s.vtk")
    data = read_vtk_cell_data(cells)
    assert data["n_cells"] == cube2.n_cells
    assert np.allclose(data["density"], state.rho.values, rtol=0, atol=0)
    assert np.allclose(data["velocity"], state.u.cell_means(), rtol=0, atol=0)
    fdata = read_vtk_cell_data(faces)
    assert fdata["n_cells"] == cube2.n_faces
    assert np.array_equal(fdata["velocity_dof"], state.u.values)
    assert fdata["boundary"].sum() == len(cube2.boundary_faces)
    assert cells.read_text().startswith("# vtk DataFile Version 3.0")
