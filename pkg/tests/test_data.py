import gzip
import struct

import numpy as np
import numpy.testing as npt
import pytest

from fairdiffusion.autodiff import Tape, Tensor, backward, mean, mul
from fairdiffusion.data import (ConditionVocab, DatasetSpec, build_target_set,
                                condition_embedding, condition_embeddings,
                                generate_nontarget, images_to_idx_bytes,
                                labels_to_idx_bytes, load_idx_file, load_mnist_split,
                                parse_idx)
from fairdiffusion.errors import ContractError, DataError, IdxFormatError


def test_parse_single_zero_image():
    payload = struct.pack(">iiii", 0x803, 1, 28, 28) + bytes(784)
    kind, images = parse_idx(payload)
    assert kind == "images"
    assert images.shape == (1, 28, 28)
    npt.assert_array_equal(images, np.full((1, 28, 28), -1.0, dtype=np.float32))


def test_parse_labels():
    payload = struct.pack(">ii", 0x801, 3) + bytes([7, 0, 9])
    kind, labels = parse_idx(payload)
    assert kind == "labels"
    npt.assert_array_equal(labels, [7, 0, 9])


def test_unknown_magic_is_cited():
    payload = struct.pack(">iiii", 0x805, 1, 28, 28) + bytes(784)
    with pytest.raises(IdxFormatError, match="0x00000805"):
        parse_idx(payload)


def test_truncated_payload_rejected():
    payload = struct.pack(">iiii", 0x803, 2, 28, 28) + bytes(784)
    with pytest.raises(IdxFormatError, match="length"):
        parse_idx(payload)
    with pytest.raises(IdxFormatError):
        parse_idx(struct.pack(">ii", 0x801, 10) + bytes(3))


def test_idx_round_trip():
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, size=(5, 28, 28)).astype(np.uint8)
    _, images = parse_idx(images_to_idx_bytes(raw))
    again = images_to_idx_bytes(images)
    _, images2 = parse_idx(again)
    npt.assert_array_equal(images, images2)
    assert again == images_to_idx_bytes(raw)

    labels = np.array([1, 2, 3], dtype=np.int64)
    _, parsed = parse_idx(labels_to_idx_bytes(labels))
    npt.assert_array_equal(parsed, labels)


def test_gzip_and_raw_files_load_identically(tmp_path):
    payload = images_to_idx_bytes(np.zeros((2, 28, 28), dtype=np.uint8))
    raw_path = tmp_path / "imgs"
    gz_path = tmp_path / "imgs.gz"
    raw_path.write_bytes(payload)
    gz_path.write_bytes(gzip.compress(payload))
    _, a = load_idx_file(raw_path)
    _, b = load_idx_file(gz_path)
    npt.assert_array_equal(a, b)


def test_count_cross_check(tmp_path):
    (tmp_path / "i").write_bytes(images_to_idx_bytes(np.zeros((2, 28, 28), dtype=np.uint8)))
    (tmp_path / "l").write_bytes(labels_to_idx_bytes(np.array([1, 2, 3])))
    with pytest.raises(DataError, match="count mismatch"):
        load_mnist_split(tmp_path / "i", tmp_path / "l")


def fake_pool(seed=0):
    rng = np.random.default_rng(seed)
    images = rng.uniform(-1, 1, (400, 28, 28)).astype(np.float32)
    labels = np.repeat(np.arange(10), 40)
    return images, labels


def test_target_set_composition_spd(vocab):
    images, labels = fake_pool()
    spec = DatasetSpec(d1=3, d2=0, n1=30, n2=10, scenario="spd", seed=5)
    examples = build_target_set(spec, images, labels, vocab)
    assert len(examples) == 40
    assert all(ex.y == 1 for ex in examples)
    by_class = {d: [ex for ex in examples if ex.source_class == d] for d in (3, 0)}
    assert len(by_class[3]) == 30 and len(by_class[0]) == 10
    assert all(ex.condition_id == vocab.digit_id(3) for ex in by_class[3])
    assert all(ex.condition_id == vocab.digit_id(0) for ex in by_class[0])


def test_target_set_composition_fd(vocab):
    images, labels = fake_pool()
    spec = DatasetSpec(d1=8, d2=7, n1=20, n2=5, scenario="fd", seed=5)
    examples = build_target_set(spec, images, labels, vocab)
    assert all(ex.condition_id == vocab.neutral_id for ex in examples)


def test_target_set_sampling_is_seeded_and_without_replacement(vocab):
    images, labels = fake_pool()
    spec = DatasetSpec(d1=1, d2=2, n1=35, n2=20, scenario="spd", seed=9)
    a = build_target_set(spec, images, labels, vocab)
    b = build_target_set(spec, images, labels, vocab)
    for ex_a, ex_b in zip(a, b):
        npt.assert_array_equal(ex_a.image, ex_b.image)
    hashes = {ex.image.tobytes() for ex in a}
    assert len(hashes) == len(a)


def test_target_set_insufficient_pool(vocab):
    images, labels = fake_pool()
    with pytest.raises(DataError, match="digit 3"):
        build_target_set(DatasetSpec(d1=3, d2=0, n1=400, n2=10), images, labels, vocab)


def test_dataset_spec_validation():
    with pytest.raises(DataError):
        DatasetSpec(d1=3, d2=3)
    with pytest.raises(DataError):
        DatasetSpec(d1=3, d2=0, n1=0)
    with pytest.raises(DataError):
        DatasetSpec(d1=3, d2=0, scenario="other")


def test_nontarget_generation(vocab):
    examples = generate_nontarget(100, 4, vocab)
    assert len(examples) == 100
    assert all(ex.y == 0 for ex in examples)
    assert all(ex.condition_id == vocab.non_target_id for ex in examples)
    stacked = np.stack([ex.image for ex in examples])
    assert stacked.min() >= -1.0 and stacked.max() <= 1.0
    again = generate_nontarget(100, 4, vocab)
    npt.assert_array_equal(stacked, np.stack([ex.image for ex in again]))
    # different seed, different content
    other = generate_nontarget(100, 5, vocab)
    assert not np.array_equal(stacked, np.stack([ex.image for ex in other]))


def test_every_condition_id_resolves(vocab):
    for name in vocab.names:
        cid = vocab.resolve(name)
        assert vocab.check_id(cid) == cid
    with pytest.raises(ContractError, match="unknown condition"):
        vocab.resolve("A letter")
    with pytest.raises(ContractError):
        vocab.check_id(99)


def test_condition_embedding_rows():
    vocab = ConditionVocab(embed_width=8, seed=3)
    a = condition_embedding(vocab, 2).data
    b = condition_embedding(vocab, 2).data
    npt.assert_array_equal(a, b)
    c = condition_embedding(vocab, 5).data
    assert not np.array_equal(a, c)
    rows = condition_embeddings(vocab, [2, 5, 2]).data
    npt.assert_array_equal(rows[0], rows[2])


def test_condition_table_learns_through_the_tape():
    vocab = ConditionVocab(embed_width=4, seed=0)
    with Tape() as tape:
        tape.watch(vocab.table)
        emb = condition_embeddings(vocab, [1, 1, 3])
        loss = mean(mul(emb, emb))
    backward(loss, tape)
    grads = vocab.table.grad
    assert np.abs(grads[1]).max() > 0
    assert np.abs(grads[3]).max() > 0
    npt.assert_array_equal(grads[0], np.zeros(4))
