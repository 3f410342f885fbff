import pytest

from epiorm.config import TrainConfig, dump_config, fingerprint, parse_config
from epiorm.errors import ArgumentError
from epiorm.network import NetConfig


def test_defaults_round_trip_through_text():
    train, net = TrainConfig(), NetConfig()
    back_train, back_net = parse_config(dump_config(train, net))
    assert back_train == train and back_net == net
    assert train.weight_decay == 1e-5 and train.batch_size == 128


def test_keys_route_to_both_sections():
    train, net = parse_config("iterations = 7\nwidth = 16  # toy\n# comment\naugment = off\n")
    assert train.iterations == 7 and not train.augment
    assert net.width == 16


def test_unknown_key_rejected():
    with pytest.raises(ArgumentError, match="unknown key 'learning_rate'"):
        parse_config("learning_rate = 0.1\n")


@pytest.mark.parametrize("text", ["batch_size = 1", "iterations = 0", "precision = half",
                                  "lr = fast", "augment = maybe", "no equals sign",
                                  "shifts = 0.5,x", "n_conv_blocks = 3"])
def test_invalid_values_rejected(text):
    with pytest.raises(Exception) as info:
        parse_config(text)
    assert isinstance(info.value, (ArgumentError, ValueError))


def test_fingerprint_tracks_every_field():
    base = fingerprint(TrainConfig(), NetConfig())
    assert len(base) == 16
    assert fingerprint(TrainConfig(), NetConfig()) == base
    assert fingerprint(TrainConfig(seed=1), NetConfig()) != base
    assert fingerprint(TrainConfig(), NetConfig(width=16)) != base
    assert NetConfig(width=16).fingerprint() != NetConfig().fingerprint()


def test_shift_values():
    assert TrainConfig(shifts="").shift_values() == ()
    assert TrainConfig().shift_values() == (-1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0)
