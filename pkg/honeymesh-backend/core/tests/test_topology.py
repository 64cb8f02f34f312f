from ipaddress import IPv4Address

from django.test import SimpleTestCase

from core.exceptions import InvalidTarget, NoRoute
from core.topology import FilterVerdict, FirewallRole, Link, Node, NodeKind, Topology, validate_topology

from .helpers import AGENT, CLIENT, WEB, make_packet, small_topology


class RoutingTests(SimpleTestCase):
    def setUp(self):
        self.topology = small_topology()

    def test_default_route_goes_toward_destination(self):
        self.assertEqual(self.topology.route('r1', make_packet(dst=WEB)), 'web')

    def test_redirect_takes_precedence_for_its_source(self):
        self.topology.install_redirect('r1', AGENT, 'farm')
        self.assertEqual(self.topology.route('r1', make_packet(src=AGENT, dst=WEB)), 'farm')
        self.assertEqual(self.topology.route('r1', make_packet(src=CLIENT, dst=WEB)), 'web')

    def test_unknown_destination_has_no_route(self):
        with self.assertRaises(NoRoute):
            self.topology.route('r1', make_packet(dst=IPv4Address('10.9.9.9')))

    def test_reinstalling_a_redirect_keeps_one_entry(self):
        self.assertTrue(self.topology.install_redirect('r1', AGENT, 'farm'))
        self.assertFalse(self.topology.install_redirect('r1', AGENT, 'farm'))
        self.assertEqual(self.topology.routing['r1'].redirects, [(AGENT, 'farm')])

    def test_redirect_to_a_production_server_is_invalid(self):
        with self.assertRaises(InvalidTarget):
            self.topology.install_redirect('r1', AGENT, 'web')

    def test_end_hosts_fall_back_to_their_gateway(self):
        self.assertEqual(self.topology.next_hop('web', IPv4Address('192.0.2.1')), 'r1')

    def test_forwarders_do_not_guess(self):
        with self.assertRaises(NoRoute):
            self.topology.next_hop('r1', IPv4Address('192.0.2.1'))


class FirewallTests(SimpleTestCase):
    def setUp(self):
        self.topology = small_topology()

    def test_empty_blocklist_allows_everything(self):
        self.assertIs(self.topology.firewall_filter('fw', make_packet(src=AGENT)), FilterVerdict.ALLOW)

    def test_blocked_source_is_dropped_and_counted(self):
        self.topology.block_source('fw', AGENT)
        self.assertIs(self.topology.firewall_filter('fw', make_packet(src=AGENT)), FilterVerdict.DROP)
        self.assertIs(self.topology.firewall_filter('fw', make_packet(src=CLIENT)), FilterVerdict.ALLOW)
        self.assertEqual(self.topology.firewalls['fw'].drops, 1)

    def test_blocking_twice_is_idempotent(self):
        self.assertTrue(self.topology.block_source('fw', AGENT))
        self.assertFalse(self.topology.block_source('fw', AGENT))
        self.assertEqual(self.topology.firewalls['fw'].blocked_sources, {AGENT})

    def test_internal_firewalls_are_not_external(self):
        nodes = [
            Node('c1', NodeKind.CLIENT_HOST, CLIENT),
            Node('fw', NodeKind.FIREWALL, role=FirewallRole.EXTERNAL),
            Node('ifw', NodeKind.FIREWALL, role=FirewallRole.INTERNAL),
            Node('r1', NodeKind.ROUTER),
        ]
        links = [Link('c1', 'fw', 1, 1.0), Link('fw', 'r1', 1, 1.0), Link('r1', 'ifw', 1, 1.0)]
        self.assertEqual(Topology(nodes, links).external_firewalls, ['fw'])


class ValidateTopologyTests(SimpleTestCase):
    def nodes(self):
        return [
            Node('c1', NodeKind.CLIENT_HOST, CLIENT),
            Node('fw', NodeKind.FIREWALL, role=FirewallRole.EXTERNAL),
            Node('r1', NodeKind.ROUTER),
            Node('web', NodeKind.PRODUCTION_SERVER, WEB),
        ]

    def test_sound_layout_has_no_problems(self):
        links = [Link('c1', 'fw', 1, 1.0), Link('fw', 'r1', 1, 1.0), Link('r1', 'web', 1, 1.0)]
        self.assertEqual(validate_topology(self.nodes(), links), [])

    def test_server_behind_a_firewall_only_is_rejected(self):
        links = [Link('c1', 'fw', 1, 1.0), Link('fw', 'r1', 1, 1.0), Link('fw', 'web', 1, 1.0)]
        problems = validate_topology(self.nodes(), links)
        self.assertTrue(any('must only attach to routers' in problem for problem in problems))

    def test_firewall_bypass_is_rejected(self):
        links = [
            Link('c1', 'fw', 1, 1.0), Link('fw', 'r1', 1, 1.0),
            Link('r1', 'web', 1, 1.0), Link('c1', 'r1', 1, 1.0),
        ]
        problems = validate_topology(self.nodes(), links)
        self.assertTrue(any('without crossing a firewall' in problem for problem in problems))

    def test_structural_problems_are_reported(self):
        nodes = self.nodes() + [Node('c1', NodeKind.CLIENT_HOST, CLIENT), Node('x', NodeKind.CLIENT_HOST)]
        links = [Link('c1', 'c1', 1, 1.0), Link('c1', 'ghost', 1, 1.0)]
        problems = validate_topology(nodes, links)
        self.assertIn('duplicate node ids: c1', problems)
        self.assertIn('node x (ClientHost) needs an address', problems)
        self.assertIn('self-link on c1', problems)
        self.assertIn('link c1-ghost references unknown node ghost', problems)
