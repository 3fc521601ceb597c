"""Tests of the database, truth and alignment file formats."""
import io
import os
import json

import numpy as np
import pytest

from dbalign.errors import DataFormatError
from dbalign.recovery import PartialAlignment
from dbalign.storage import (
    atomic_write,
    read_database,
    write_database,
    read_truth,
    write_truth,
    write_alignment,
    read_alignment,
    write_json_lines,
)


def _write_text(path, text):
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(text)


class TestDatabases:

    def test_written_doubles_read_back_exactly(self, tmp_path, rng):
        matrix = rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-30, 30, size=(7, 5))
        path = str(tmp_path / 'x.csv')
        write_database(path, matrix)
        np.testing.assert_array_equal(read_database(path), matrix)

    def test_blank_lines_are_skipped(self, tmp_path):
        path = str(tmp_path / 'x.csv')
        _write_text(path, '1,2\n\n3,4\n')
        np.testing.assert_array_equal(read_database(path), [[1.0, 2.0], [3.0, 4.0]])

    def test_column_mismatch_names_the_line(self, tmp_path):
        path = str(tmp_path / 'x.csv')
        _write_text(path, '1,2,3\n4,5,6\n7,8\n')
        with pytest.raises(DataFormatError) as info:
            read_database(path)
        assert info.value.line == 3
        assert f'{path}:3' in str(info.value)

    def test_non_numeric_cell(self, tmp_path):
        path = str(tmp_path / 'x.csv')
        _write_text(path, '1,2\nfoo,4\n')
        with pytest.raises(DataFormatError) as info:
            read_database(path)
        assert info.value.line == 2

    def test_non_finite_value(self, tmp_path):
        path = str(tmp_path / 'x.csv')
        _write_text(path, '1,nan\n')
        with pytest.raises(DataFormatError):
            read_database(path)

    def test_empty_file(self, tmp_path):
        path = str(tmp_path / 'x.csv')
        _write_text(path, '')
        with pytest.raises(DataFormatError):
            read_database(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_database(str(tmp_path / 'missing.csv'))


class TestTruthAndAlignments:

    def test_truth_is_one_based_on_disk(self, tmp_path):
        path = str(tmp_path / 'truth.csv')
        write_truth(path, [2, 0, 1])
        with open(path, encoding='utf-8') as handle:
            assert handle.read() == '1,3\n2,1\n3,2\n'
        np.testing.assert_array_equal(read_truth(path, 3), [2, 0, 1])

    def test_truth_must_be_a_permutation(self, tmp_path):
        path = str(tmp_path / 'truth.csv')
        _write_text(path, '1,1\n2,1\n')
        with pytest.raises(DataFormatError):
            read_truth(path, 2)

    def test_truth_index_range(self, tmp_path):
        path = str(tmp_path / 'truth.csv')
        _write_text(path, '1,2\n2,3\n')
        with pytest.raises(DataFormatError) as info:
            read_truth(path, 2)
        assert info.value.line == 2

    def test_zero_index_is_rejected(self, tmp_path):
        path = str(tmp_path / 'truth.csv')
        _write_text(path, '0,1\n')
        with pytest.raises(DataFormatError):
            read_truth(path, 1)

    def test_alignment_round_trip(self, tmp_path):
        path = str(tmp_path / 'out.csv')
        alignment = PartialAlignment(n=5, pairs=((4, 0), (1, 2)))
        write_alignment(path, alignment)
        assert read_alignment(path, 5) == alignment

    def test_empty_alignment_is_an_empty_file(self, tmp_path):
        path = str(tmp_path / 'out.csv')
        write_alignment(path, PartialAlignment(n=3))
        assert os.path.getsize(path) == 0
        assert read_alignment(path, 3).size == 0

    def test_alignment_repeating_a_column(self, tmp_path):
        path = str(tmp_path / 'out.csv')
        _write_text(path, '1,1\n2,1\n')
        with pytest.raises(DataFormatError):
            read_alignment(path, 2)


class TestAtomicWrite:

    def test_failure_keeps_the_previous_file(self, tmp_path):
        path = str(tmp_path / 'result.csv')
        _write_text(path, 'previous\n')
        with pytest.raises(RuntimeError):
            with atomic_write(path) as sink:
                sink.write('partial')
                raise RuntimeError('interrupted')
        with open(path, encoding='utf-8') as handle:
            assert handle.read() == 'previous\n'
        assert os.listdir(tmp_path) == ['result.csv']

    def test_success_replaces_the_file(self, tmp_path):
        path = str(tmp_path / 'result.csv')
        _write_text(path, 'previous\n')
        with atomic_write(path) as sink:
            sink.write('new\n')
        with open(path, encoding='utf-8') as handle:
            assert handle.read() == 'new\n'


def test_json_lines_convert_numpy_values():
    sink = io.StringIO()
    write_json_lines(sink, [{'n': np.int64(3), 'rate': np.float64(0.25), 'bound': float('inf'), 'flag': np.bool_(True)}])
    assert json.loads(sink.getvalue()) == {'n': 3, 'rate': 0.25, 'bound': 'inf', 'flag': True}
