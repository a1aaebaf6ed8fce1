"""
Unit tests for the Grid class and the field containers.
Tests cover node placement, neighbour tables, boundary normals, JSON round trips and field validation.
"""

import numpy as np
import pytest

from data_classes.errors import DimensionError, InvalidTechnologyError
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField


@pytest.fixture
def square():
    """Create a 4 x 4 grid on the unit square."""
    return Grid.rectangle(4)


@pytest.fixture
def disk():
    """Create an 8 x 8 masked unit disk."""
    return Grid.disk(8)


class TestGridConstruction:
    """Test grid construction and node layout."""

    def test_cell_centred_axes(self, square):
        """Test that nodes sit at cell centres."""
        np.testing.assert_allclose(square.axes[0], [0.125, 0.375, 0.625, 0.875])
        assert square.spacing == (0.25, 0.25)
        assert square.size == 16
        assert square.cell_volume == pytest.approx(1.0 / 16)

    def test_lexicographic_order(self, square):
        """Test that nodes are ordered by x1 first, then x2."""
        np.testing.assert_allclose(square.points[0], [0.125, 0.125])
        np.testing.assert_allclose(square.points[1], [0.125, 0.375])
        np.testing.assert_allclose(square.points[4], [0.375, 0.125])

    def test_neighbour_tables(self, square):
        """Test forward and backward neighbour indices."""
        assert square.forward[0][0] == 4
        assert square.forward[1][0] == 1
        assert square.backward[0][0] == -1
        assert square.backward[1][5] == 4
        assert square.forward[1][3] == -1

    def test_boundary_flags(self, square):
        """Test that only the 2 x 2 centre block is interior."""
        assert int(square.boundary.sum()) == 12
        assert square.interior_axis_counts() == (2, 2)

    def test_corner_and_edge_normals(self, square):
        """Test outward normals on the rectangle."""
        np.testing.assert_allclose(square.normals[0], [-1 / np.sqrt(2), -1 / np.sqrt(2)])
        np.testing.assert_allclose(square.normals[1], [-1.0, 0.0])
        interior = np.flatnonzero(~square.boundary)
        assert not np.any(square.normals[interior])

    def test_disk_mask(self, disk):
        """Test the number of active nodes in the masked disk."""
        assert disk.size == 52
        assert np.all(np.sum(disk.points ** 2, axis=1) <= 1.0)

    def test_disk_normals_point_outward(self, disk):
        """Test that disk normals are radial unit vectors."""
        boundary = disk.boundary_indices
        normals = disk.normals[boundary]
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
        assert np.all(np.einsum('ni,ni->n', normals, disk.points[boundary]) > 0)

    def test_complete_cells(self, square):
        """Test that complete forward cells exclude the last row and column."""
        assert int(square.complete_cells.sum()) == 9
        assert square.diagonal[0] == 5

    def test_interval(self):
        """Test a one-dimensional grid."""
        grid = Grid.interval(5, bounds=(0.0, 2.0))
        assert grid.dim == 1
        assert grid.size == 5
        assert grid.points.shape == (5, 1)
        assert int(grid.complete_cells.sum()) == 4

    def test_rectangle_with_unequal_counts(self):
        """Test a rectangle with different node counts per axis."""
        grid = Grid.rectangle(4, bounds=((0.0, 2.0), (0.0, 1.0)), n2=8)
        assert grid.counts == (4, 8)
        assert grid.spacing == (0.5, 0.125)
        assert grid.mean_spacing == pytest.approx(0.25)

    def test_too_few_nodes(self):
        """Test that one node per axis is rejected."""
        with pytest.raises(DimensionError):
            Grid.rectangle(1)

    def test_empty_range(self):
        """Test that reversed bounds are rejected."""
        with pytest.raises(DimensionError):
            Grid.rectangle(4, bounds=((1.0, 0.0), (0.0, 1.0)))

    def test_unknown_shape(self):
        """Test that unknown shapes are rejected."""
        with pytest.raises(DimensionError):
            Grid(shape="torus", counts=(4, 4), lower=(0, 0), upper=(1, 1))

    def test_points_are_read_only(self, square):
        """Test that node coordinates cannot be modified."""
        with pytest.raises(ValueError):
            square.points[0, 0] = 5.0


class TestGridHelpers:
    """Test grid helper methods."""

    def test_json_round_trip_rectangle(self):
        """Test that a rectangle survives to_json_data/from_json_data."""
        grid = Grid.rectangle(6, bounds=((0.5, 1.5), (-1.0, 2.0)))
        assert Grid.from_json_data(grid.to_json_data()) == grid

    def test_json_round_trip_disk(self, disk):
        """Test that a disk survives to_json_data/from_json_data."""
        assert Grid.from_json_data(disk.to_json_data()) == disk

    def test_json_n_override(self, disk):
        """Test that the node count can be overridden."""
        grid = Grid.from_json_data(disk.to_json_data(), n_override=16)
        assert grid.counts == (16, 16)

    def test_nearest_node(self, square):
        """Test nearest node lookup."""
        assert square.nearest_node((0.1, 0.1)) == 0
        assert square.nearest_node((0.9, 0.9)) == 15

    def test_check_same(self, square):
        """Test that equal grids pass and different grids raise."""
        square.check_same(Grid.rectangle(4))
        with pytest.raises(DimensionError):
            square.check_same(Grid.rectangle(5))


class TestFields:
    """Test scalar, vector and matrix fields."""

    def test_scalar_from_function(self, square):
        """Test sampling a function at the nodes."""
        field = ScalarField.from_function(square, lambda x1, x2: x1 + 2 * x2)
        assert field.values[1] == pytest.approx(0.125 + 0.75)

    def test_scalar_constant_broadcasts(self, square):
        """Test that constant functions broadcast to every node."""
        field = ScalarField.from_function(square, lambda x1, x2: 3.0)
        assert np.all(field.values == 3.0)

    def test_scalar_wrong_shape(self, square):
        """Test that a wrongly sized array is rejected."""
        with pytest.raises(DimensionError):
            ScalarField(square, np.zeros(5))

    def test_vector_linear(self, square):
        """Test the linear field x -> M x."""
        matrix = np.array([[0.0, 1.0], [-1.0, 0.0]])
        field = VectorField.linear(square, matrix)
        np.testing.assert_allclose(field.values, square.points @ matrix.T)
        np.testing.assert_allclose(field.component(0), square.points[:, 1])

    def test_vector_from_function(self, square):
        """Test building a vector field from component functions."""
        field = VectorField.from_function(square, lambda x1, x2: (x1, 0.0))
        np.testing.assert_allclose(field.values[:, 0], square.points[:, 0])
        assert not np.any(field.values[:, 1])

    def test_matrix_spd_check(self, square):
        """Test that an indefinite matrix flagged SPD is rejected."""
        with pytest.raises(InvalidTechnologyError):
            MatrixField.constant(square, [[1.0, 2.0], [2.0, 1.0]], spd=True)

    def test_matrix_nonsymmetric_is_not_spd(self, square):
        """Test that asymmetric matrices fail the SPD check."""
        field = MatrixField.constant(square, [[1.0, 0.5], [0.0, 1.0]])
        assert not field.is_spd()

    def test_matrix_apply_and_solve(self, square):
        """Test that solve inverts apply."""
        field = MatrixField.constant(square, [[2.0, 0.5], [0.5, 1.0]], spd=True)
        vectors = VectorField.linear(square, np.eye(2))
        recovered = field.solve(field.apply(vectors))
        np.testing.assert_allclose(recovered.values, vectors.values)

    def test_matrix_inverse(self, square):
        """Test the pointwise inverse."""
        field = MatrixField.constant(square, [[4.0, 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(field.inverse().values[0], [[0.25, 0.0], [0.0, 0.5]])
